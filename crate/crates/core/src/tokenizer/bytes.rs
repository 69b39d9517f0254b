// SPDX-License-Identifier: MIT OR Apache-2.0

//! The reversible byte <-> printable-unicode mapping used by byte-level BPE.

/// Maps each byte to a printable char; printable Latin-1 bytes map to
/// themselves, the rest to code points from U+0100 upwards.
pub(crate) fn byte_encoder() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut next = 0u32;
    for b in 0..=255u8 {
        let printable = matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        table[b as usize] = if printable {
            char::from(b)
        } else {
            let c = char::from_u32(256 + next).expect("valid code point");
            next += 1;
            c
        };
    }
    table
}
