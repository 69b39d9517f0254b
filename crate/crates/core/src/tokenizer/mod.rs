// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level BPE tokenizer for GPT-2-style `vocab.json` + `merges.txt`.
//!
//! No special tokens are ever inserted: prompts are encoded as raw text.

mod bytes;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use fancy_regex::Regex;

use crate::error::{Error, Result};
use crate::kinship::Span;

/// GPT-2 pre-tokenization pattern.
const PRETOKENIZE: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

/// A token id with the byte range of the source text it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoded {
    pub id: u32,
    pub start: usize,
    pub end: usize,
}

/// Token positions of the relation words and of the final prompt token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanTokens {
    pub relations: Vec<usize>,
    pub last: usize,
}

pub struct Tokenizer {
    encoder: HashMap<String, u32>,
    decoder: Vec<String>,
    ranks: HashMap<(String, String), u32>,
    byte_encoder: [char; 256],
    byte_decoder: HashMap<char, u8>,
    pattern: Regex,
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tokenizer")
            .field("vocab", &self.decoder.len())
            .field("merges", &self.ranks.len())
            .finish()
    }
}

impl Tokenizer {
    /// Loads `vocab.json` (token -> id) and `merges.txt` (ranked pairs).
    pub fn from_files(vocab: &Path, merges: &Path) -> Result<Tokenizer> {
        let vocab_text =
            fs::read_to_string(vocab).map_err(|e| Error::TokenizerFormat(format!("{}: {e}", vocab.display())))?;
        let merges_text =
            fs::read_to_string(merges).map_err(|e| Error::TokenizerFormat(format!("{}: {e}", merges.display())))?;
        Tokenizer::from_strs(&vocab_text, &merges_text)
    }

    /// Loads `vocab.json` and `merges.txt` from one directory.
    pub fn from_dir(dir: &Path) -> Result<Tokenizer> {
        Tokenizer::from_files(&dir.join("vocab.json"), &dir.join("merges.txt"))
    }

    pub fn from_strs(vocab_json: &str, merges: &str) -> Result<Tokenizer> {
        let encoder: HashMap<String, u32> =
            serde_json::from_str(vocab_json).map_err(|e| Error::TokenizerFormat(format!("vocab: {e}")))?;
        let mut decoder = vec![None; encoder.len()];
        for (tok, &id) in &encoder {
            let slot = decoder
                .get_mut(id as usize)
                .ok_or_else(|| Error::TokenizerFormat(format!("id {id} of {tok:?} breaks the contiguous id range")))?;
            if slot.is_some() {
                return Err(Error::TokenizerFormat(format!("duplicate id {id}")));
            }
            *slot = Some(tok.clone());
        }
        let decoder: Vec<String> = decoder.into_iter().map(|t| t.unwrap()).collect();

        let mut ranks = HashMap::new();
        for (lineno, line) in merges.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    let rank = ranks.len() as u32;
                    ranks.entry((a.to_string(), b.to_string())).or_insert(rank);
                }
                _ => {
                    return Err(Error::TokenizerFormat(format!(
                        "merges line {}: expected two symbols, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }

        let byte_encoder = bytes::byte_encoder();
        let byte_decoder = byte_encoder.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        Ok(Tokenizer {
            encoder,
            decoder,
            ranks,
            byte_encoder,
            byte_decoder,
            pattern: Regex::new(PRETOKENIZE).expect("static pattern"),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.decoder.len()
    }

    pub fn merge_count(&self) -> usize {
        self.ranks.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.decoder.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_with_offsets(text).into_iter().map(|e| e.id).collect()
    }

    /// Encodes `text`, reporting the byte range each token covers.
    pub fn encode_with_offsets(&self, text: &str) -> Vec<Encoded> {
        let mut out = Vec::new();
        for m in self.pattern.find_iter(text) {
            let m = m.expect("pre-tokenizer cannot fail on valid UTF-8");
            let mut pos = m.start();
            for symbol in self.bpe(m.as_str()) {
                let len = symbol.chars().count();
                let id = *self
                    .encoder
                    .get(&symbol)
                    .expect("byte-level BPE symbols are always in the vocabulary");
                out.push(Encoded {
                    id,
                    start: pos,
                    end: pos + len,
                });
                pos += len;
            }
        }
        out
    }

    fn bpe(&self, piece: &str) -> Vec<String> {
        let mut symbols: Vec<String> = piece
            .bytes()
            .map(|b| self.byte_encoder[b as usize].to_string())
            .collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && self.ranks.get(&(symbols[i].clone(), symbols[i + 1].clone())) == Some(&rank)
                {
                    merged.push(format!("{}{}", symbols[i], symbols[i + 1]));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::Decode(id))?;
            for c in tok.chars() {
                // added tokens such as <|endoftext|> are plain ASCII
                out.push(self.byte_decoder.get(&c).copied().unwrap_or(c as u8));
            }
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    /// The id of `" " + word` when it encodes to exactly one token.
    pub fn single_token_id(&self, word: &str) -> Result<Option<u32>> {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Precondition(format!(
                "answer word must be non-empty without whitespace, got {word:?}"
            )));
        }
        let ids = self.encode(&format!(" {word}"));
        Ok((ids.len() == 1).then(|| ids[0]))
    }

    /// Maps relation-word byte spans to the index of the token containing
    /// each word's first character, and reports the final token index.
    ///
    /// A token must start at the word itself or at the single space before
    /// it; anything else means the word was merged with its neighbour.
    pub fn locate_spans(&self, text: &str, spans: &[Span]) -> Result<SpanTokens> {
        let enc = self.encode_with_offsets(text);
        locate_in(&enc, text, spans)
    }
}

pub(crate) fn locate_in(enc: &[Encoded], text: &str, spans: &[Span]) -> Result<SpanTokens> {
    let last = enc
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::Precondition("empty prompt".into()))?;
    let relations = spans
        .iter()
        .map(|span| {
            let idx = enc
                .iter()
                .position(|e| e.start <= span.start && span.start < e.end)
                .ok_or(Error::Alignment {
                    start: span.start,
                    end: span.end,
                })?;
            let tok_start = enc[idx].start;
            let aligned =
                tok_start == span.start || (tok_start + 1 == span.start && text.as_bytes()[tok_start] == b' ');
            if aligned {
                Ok(idx)
            } else {
                Err(Error::Alignment {
                    start: span.start,
                    end: span.end,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpanTokens { relations, last })
}
