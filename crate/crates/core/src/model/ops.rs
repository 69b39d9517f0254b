// SPDX-License-Identifier: MIT OR Apache-2.0

//! Row-wise f32 kernels.
//!
//! Every output element is computed from its own input row with a fixed
//! accumulation order, so results never depend on how many rows are
//! processed together or on the thread schedule. Patched suffix runs rely
//! on this to reproduce full runs bit for bit.

use crate::exec::Exec;

/// Output features handed to one task.
const FEATURE_BLOCK: usize = 64;

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0f32;
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Dense projection with weights stored `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Linear {
    pub fn row(&self, o: usize) -> &[f32] {
        &self.weight[o * self.n_in..(o + 1) * self.n_in]
    }

    /// `x` holds `rows` inputs of width `n_in`; returns `rows × n_out`.
    pub fn apply(&self, x: &[f32], exec: Exec) -> Vec<f32> {
        let rows = x.len() / self.n_in;
        debug_assert_eq!(rows * self.n_in, x.len());
        // feature-major scratch: block b holds features [b*FB, ..) for all rows
        let mut scratch = vec![0f32; rows * self.n_out];
        let block_len = FEATURE_BLOCK * rows;
        exec.for_each_chunk(&mut scratch, block_len.max(1), |b, chunk| {
            let first = b * FEATURE_BLOCK;
            let n_feat = chunk.len() / rows.max(1);
            for f in 0..n_feat {
                let o = first + f;
                let w = self.row(o);
                let bias = self.bias.as_ref().map_or(0.0, |b| b[o]);
                for r in 0..rows {
                    chunk[f * rows + r] = dot(&x[r * self.n_in..(r + 1) * self.n_in], w) + bias;
                }
            }
        });
        let mut out = vec![0f32; rows * self.n_out];
        for o in 0..self.n_out {
            for r in 0..rows {
                out[r * self.n_out + o] = scratch[o * rows + r];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub eps: f32,
}

impl LayerNorm {
    pub fn apply_row(&self, x: &[f32], out: &mut [f32]) {
        let n = x.len() as f32;
        let mean = x.iter().sum::<f32>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + self.eps).sqrt();
        for i in 0..x.len() {
            out[i] = (x[i] - mean) * inv * self.weight[i] + self.bias[i];
        }
    }

    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        let d = self.weight.len();
        let mut out = vec![0f32; x.len()];
        for (src, dst) in x.chunks(d).zip(out.chunks_mut(d)) {
            self.apply_row(src, dst);
        }
        out
    }
}

pub fn gelu_tanh(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn gelu_erf(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0f32;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}
