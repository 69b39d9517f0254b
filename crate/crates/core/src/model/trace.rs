// SPDX-License-Identifier: MIT OR Apache-2.0

//! Captured residual-stream states of one forward pass.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Optional captures beyond the hidden states, which are always kept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Capture {
    /// Per-layer, per-head attention weights (`L × heads × T × T`).
    pub attention: bool,
    /// Block outputs `Δ_l` as computed, before being added to the stream.
    pub deltas: bool,
}

impl Capture {
    pub const NONE: Capture = Capture {
        attention: false,
        deltas: false,
    };
    pub const ALL: Capture = Capture {
        attention: true,
        deltas: true,
    };
}

/// Hidden states `h[l][t]` for `l ∈ 0..=L` (0 is the embedding output) and
/// every position, plus the final-position logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    pub n_layers: usize,
    pub seq_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub(crate) hidden: Vec<f32>,
    pub(crate) deltas: Option<Vec<f32>>,
    pub(crate) attention: Option<Vec<Vec<f32>>>,
    /// Logits at the last position, `readout(h[L][T])`.
    pub final_logits: Vec<f32>,
}

impl ResidualTrace {
    /// Index of the last position.
    pub fn last(&self) -> usize {
        self.seq_len - 1
    }

    /// All positions of layer `l`, row-major `T × d`.
    pub fn layer(&self, l: usize) -> &[f32] {
        let n = self.seq_len * self.d_model;
        &self.hidden[l * n..(l + 1) * n]
    }

    pub fn hidden(&self, l: usize, t: usize) -> &[f32] {
        let d = self.d_model;
        &self.layer(l)[t * d..(t + 1) * d]
    }

    /// Block output `Δ_l` at position `t`, for `l ∈ 1..=L`.
    pub fn delta(&self, l: usize, t: usize) -> Option<&[f32]> {
        let deltas = self.deltas.as_ref()?;
        if l == 0 || l > self.n_layers {
            return None;
        }
        let n = self.seq_len * self.d_model;
        let d = self.d_model;
        Some(&deltas[(l - 1) * n + t * d..(l - 1) * n + (t + 1) * d])
    }

    pub fn has_attention(&self) -> bool {
        self.attention.is_some()
    }

    /// Attention of `query` onto `key` in head `head` of block `l ∈ 1..=L`.
    pub fn attention(&self, l: usize, head: usize, query: usize, key: usize) -> Option<f32> {
        let att = self.attention.as_ref()?.get(l.checked_sub(1)?)?;
        let t = self.seq_len;
        att.get((head * t + query) * t + key).copied()
    }

    /// Writes `h[l][T]` for every layer as little-endian f32, layer-major.
    pub fn write_final_token_dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for l in 0..=self.n_layers {
            for v in self.hidden(l, self.last()) {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
