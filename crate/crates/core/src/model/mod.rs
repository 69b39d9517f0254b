// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-LayerNorm decoder-only transformer inference with residual capture
//! and single-state patching.
//!
//! Block `l` maps `h[l-1]` to `h[l] = h[l-1] + Δ_l`. All arithmetic is f32.

mod config;
mod layout;
pub mod ops;
mod toy;
mod trace;
mod weights;

pub use config::{Activation, Architecture, ModelConfig, Positions};
pub use layout::{LinearLayout, QkvOrder, TensorNames, WeightLayout};
pub use toy::ToyConfig;
pub use trace::{Capture, ResidualTrace};
pub use weights::{load_model, load_model_dir, TensorMap, TensorSource};

use ops::{gelu_erf, gelu_tanh, softmax_in_place, LayerNorm, Linear};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub fc: Linear,
    pub proj: Linear,
}

#[derive(Debug, Clone)]
struct Rotary {
    dims: usize,
    cos: Vec<f32>,
    sin: Vec<f32>,
}

impl Rotary {
    fn new(dims: usize, base: f32, max_positions: usize) -> Self {
        let half = dims / 2;
        let inv: Vec<f32> = (0..half)
            .map(|j| 1.0 / base.powf((2 * j) as f32 / dims as f32))
            .collect();
        let mut cos = Vec::with_capacity(max_positions * half);
        let mut sin = Vec::with_capacity(max_positions * half);
        for p in 0..max_positions {
            for &f in &inv {
                let angle = p as f32 * f;
                cos.push(angle.cos());
                sin.push(angle.sin());
            }
        }
        Rotary { dims, cos, sin }
    }

    /// Rotates the first `dims` channels of one head vector in place.
    fn apply(&self, x: &mut [f32], pos: usize) {
        let half = self.dims / 2;
        let (cos, sin) = (
            &self.cos[pos * half..(pos + 1) * half],
            &self.sin[pos * half..(pos + 1) * half],
        );
        for j in 0..half {
            let (a, b) = (x[j], x[j + half]);
            x[j] = a * cos[j] - b * sin[j];
            x[j + half] = b * cos[j] + a * sin[j];
        }
    }
}

/// Output of one block over positions `start..T`.
pub struct BlockOutput {
    /// New hidden rows `h[l][start..T]`.
    pub hidden: Vec<f32>,
    /// `Δ_l` rows for `start..T`.
    pub delta: Vec<f32>,
    /// `heads × rows × T` attention weights when requested.
    pub attention: Option<Vec<f32>>,
}

/// A loaded model. Immutable after load; share it freely across threads.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    /// Token embedding, `[V, d]`; doubles as the unembedding when tied.
    tok_embed: Linear,
    pos_embed: Option<Vec<f32>>,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    unembed: Option<Linear>,
    rotary: Option<Rotary>,
    exec: Exec,
}

/// Replace `h[layer][index]` of a run with the same state from `source`.
#[derive(Debug, Clone, Copy)]
pub struct PatchSpec<'a> {
    pub source: &'a ResidualTrace,
    pub layer: usize,
    pub index: usize,
}

impl Model {
    pub(crate) fn from_parts(
        config: ModelConfig,
        tok_embed: Linear,
        pos_embed: Option<Vec<f32>>,
        blocks: Vec<Block>,
        ln_f: LayerNorm,
        unembed: Option<Linear>,
    ) -> Self {
        let rotary = match config.positions {
            Positions::Rotary { dims, base } if dims > 0 => Some(Rotary::new(dims, base, config.max_positions)),
            _ => None,
        };
        Model {
            config,
            tok_embed,
            pos_embed,
            blocks,
            ln_f,
            unembed,
            rotary,
            exec: Exec::default(),
        }
    }

    /// Sets the strategy used inside kernels.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Post-embedding states `h[0]` for `ids`.
    pub fn embed(&self, ids: &[u32]) -> Result<Vec<f32>> {
        if ids.is_empty() {
            return Err(Error::Precondition("empty input".into()));
        }
        if ids.len() > self.config.max_positions {
            return Err(Error::Length {
                len: ids.len(),
                max: self.config.max_positions,
            });
        }
        let d = self.d_model();
        let mut h = Vec::with_capacity(ids.len() * d);
        for (p, &id) in ids.iter().enumerate() {
            if id as usize >= self.vocab_size() {
                return Err(Error::Index {
                    index: id as usize,
                    len: self.vocab_size(),
                });
            }
            let tok = self.tok_embed.row(id as usize);
            match &self.pos_embed {
                Some(pos) => h.extend(tok.iter().zip(&pos[p * d..(p + 1) * d]).map(|(a, b)| a + b)),
                None => h.extend_from_slice(tok),
            }
        }
        Ok(h)
    }

    /// Runs block `layer` (0-based) on the full stream `h[layer]`, computing
    /// outputs only for positions `start..T`. Earlier positions still serve
    /// as keys and values.
    pub fn apply_block(&self, layer: usize, h: &[f32], start: usize, want_attention: bool) -> BlockOutput {
        let cfg = &self.config;
        let (d, n_heads, hd) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
        let t = h.len() / d;
        let rows = t - start;
        let block = &self.blocks[layer];
        let exec = self.exec;

        let x = block.ln1.apply(h);
        let mut q = block.q.apply(&x[start * d..], exec);
        let mut k = block.k.apply(&x, exec);
        let v = block.v.apply(&x, exec);
        if let Some(rot) = &self.rotary {
            for r in 0..rows {
                for head in 0..n_heads {
                    let o = r * d + head * hd;
                    rot.apply(&mut q[o..o + hd], start + r);
                }
            }
            for p in 0..t {
                for head in 0..n_heads {
                    let o = p * d + head * hd;
                    rot.apply(&mut k[o..o + hd], p);
                }
            }
        }

        let scale = 1.0 / (hd as f32).sqrt();
        let per_row: Vec<(Vec<f32>, Vec<f32>)> = exec.map_range(rows, |r| {
            let pos = start + r;
            let mut ctx = vec![0f32; d];
            let mut weights = vec![0f32; n_heads * (pos + 1)];
            for head in 0..n_heads {
                let qh = &q[r * d + head * hd..r * d + (head + 1) * hd];
                let w = &mut weights[head * (pos + 1)..(head + 1) * (pos + 1)];
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj = ops::dot(qh, &k[j * d + head * hd..j * d + (head + 1) * hd]) * scale;
                }
                softmax_in_place(w);
                let out = &mut ctx[head * hd..(head + 1) * hd];
                for (j, &wj) in w.iter().enumerate() {
                    let vj = &v[j * d + head * hd..j * d + (head + 1) * hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += wj * vv;
                    }
                }
            }
            (ctx, weights)
        });

        let mut ctx = Vec::with_capacity(rows * d);
        let mut attention = want_attention.then(|| vec![0f32; n_heads * rows * t]);
        for (r, (c, w)) in per_row.iter().enumerate() {
            ctx.extend_from_slice(c);
            if let Some(att) = attention.as_mut() {
                let pos = start + r;
                for head in 0..n_heads {
                    let dst = (head * rows + r) * t;
                    att[dst..dst + pos + 1].copy_from_slice(&w[head * (pos + 1)..(head + 1) * (pos + 1)]);
                }
            }
        }
        let attn_out = block.o.apply(&ctx, exec);

        let resid = &h[start * d..];
        let mlp_in = if cfg.parallel_residual {
            block.ln2.apply(resid)
        } else {
            let mid: Vec<f32> = resid.iter().zip(&attn_out).map(|(a, b)| a + b).collect();
            block.ln2.apply(&mid)
        };
        let mut act = block.fc.apply(&mlp_in, exec);
        match cfg.activation {
            Activation::GeluTanh => act.iter_mut().for_each(|v| *v = gelu_tanh(*v)),
            Activation::Gelu => act.iter_mut().for_each(|v| *v = gelu_erf(*v)),
        }
        let mlp_out = block.proj.apply(&act, exec);

        let hidden: Vec<f32> = if cfg.parallel_residual {
            (0..rows * d).map(|i| (mlp_out[i] + attn_out[i]) + resid[i]).collect()
        } else {
            (0..rows * d).map(|i| (resid[i] + attn_out[i]) + mlp_out[i]).collect()
        };
        let delta = attn_out.iter().zip(&mlp_out).map(|(a, m)| a + m).collect();
        BlockOutput {
            hidden,
            delta,
            attention,
        }
    }

    /// `W_U · LN_f(hidden)`.
    pub fn readout(&self, hidden: &[f32]) -> Result<Vec<f32>> {
        if hidden.len() != self.d_model() {
            return Err(Error::Dimension {
                expected: self.d_model(),
                got: hidden.len(),
            });
        }
        let normed = self.ln_f.apply(hidden);
        let unembed = self.unembed.as_ref().unwrap_or(&self.tok_embed);
        Ok(unembed.apply(&normed, self.exec))
    }

    /// Full causal forward pass.
    pub fn forward(&self, ids: &[u32], capture: Capture) -> Result<ResidualTrace> {
        let h0 = self.embed(ids)?;
        let (t, d, n_layers) = (ids.len(), self.d_model(), self.n_layers());
        let mut hidden = Vec::with_capacity((n_layers + 1) * t * d);
        hidden.extend_from_slice(&h0);
        let mut deltas = capture.deltas.then(|| Vec::with_capacity(n_layers * t * d));
        let mut attention = capture.attention.then(|| Vec::with_capacity(n_layers));
        for l in 0..n_layers {
            let prev = &hidden[l * t * d..(l + 1) * t * d];
            let out = self.apply_block(l, prev, 0, capture.attention);
            hidden.extend_from_slice(&out.hidden);
            if let Some(ds) = deltas.as_mut() {
                ds.extend_from_slice(&out.delta);
            }
            if let (Some(att), Some(a)) = (attention.as_mut(), out.attention) {
                att.push(a);
            }
        }
        let final_logits = self.readout(&hidden[(n_layers * t + t - 1) * d..(n_layers * t + t) * d])?;
        Ok(ResidualTrace {
            n_layers,
            seq_len: t,
            d_model: d,
            n_heads: self.config.n_heads,
            hidden,
            deltas,
            attention,
            final_logits,
        })
    }

    fn check_patch(&self, base: &ResidualTrace, patch: &PatchSpec<'_>) -> Result<()> {
        if patch.source.seq_len != base.seq_len {
            return Err(Error::Patch(format!(
                "source has {} positions, target {}",
                patch.source.seq_len, base.seq_len
            )));
        }
        if patch.source.d_model != base.d_model || base.d_model != self.d_model() {
            return Err(Error::Patch("traces come from a different model".into()));
        }
        if patch.layer > self.n_layers() {
            return Err(Error::Patch(format!(
                "layer {} outside 0..={}",
                patch.layer,
                self.n_layers()
            )));
        }
        if patch.index >= base.seq_len {
            return Err(Error::Patch(format!(
                "position {} outside 0..{}",
                patch.index, base.seq_len
            )));
        }
        Ok(())
    }

    /// Runs `ids_b` with `h[layer][index]` taken from `patch.source`.
    pub fn forward_patched(&self, ids_b: &[u32], patch: &PatchSpec<'_>) -> Result<ResidualTrace> {
        if ids_b.len() != patch.source.seq_len {
            return Err(Error::Patch(format!(
                "length mismatch: {} vs {}",
                ids_b.len(),
                patch.source.seq_len
            )));
        }
        let base = self.forward(ids_b, Capture::NONE)?;
        self.patched_from(&base, patch, true).map(|(trace, _)| trace.unwrap())
    }

    /// Final logits of the patched run, reusing an unpatched trace of the
    /// target sequence.
    pub fn patched_logits(&self, base: &ResidualTrace, patch: &PatchSpec<'_>) -> Result<Vec<f32>> {
        self.patched_from(base, patch, false).map(|(_, logits)| logits)
    }

    /// Patched trace built from an unpatched trace of the target sequence.
    pub fn forward_patched_from(&self, base: &ResidualTrace, patch: &PatchSpec<'_>) -> Result<ResidualTrace> {
        self.patched_from(base, patch, true).map(|(trace, _)| trace.unwrap())
    }

    /// Positions before `index` cannot see position `index`, so only
    /// positions `index..T` of layers above `layer` are recomputed.
    fn patched_from(
        &self,
        base: &ResidualTrace,
        patch: &PatchSpec<'_>,
        keep_trace: bool,
    ) -> Result<(Option<ResidualTrace>, Vec<f32>)> {
        self.check_patch(base, patch)?;
        let (t, d, n_layers) = (base.seq_len, base.d_model, self.n_layers());
        let (l_star, i) = (patch.layer, patch.index);

        let mut cur = base.layer(l_star).to_vec();
        cur[i * d..(i + 1) * d].copy_from_slice(patch.source.hidden(l_star, i));
        let mut hidden = keep_trace.then(|| {
            let mut h = base.hidden[..l_star * t * d].to_vec();
            h.extend_from_slice(&cur);
            h
        });
        for l in l_star + 1..=n_layers {
            let out = self.apply_block(l - 1, &cur, i, false);
            cur[..i * d].copy_from_slice(&base.layer(l)[..i * d]);
            cur[i * d..].copy_from_slice(&out.hidden);
            if let Some(h) = hidden.as_mut() {
                h.extend_from_slice(&cur);
            }
        }
        let logits = self.readout(&cur[(t - 1) * d..])?;
        let trace = hidden.map(|hidden| ResidualTrace {
            n_layers,
            seq_len: t,
            d_model: d,
            n_heads: base.n_heads,
            hidden,
            deltas: None,
            attention: None,
            final_logits: logits.clone(),
        });
        Ok((trace, logits))
    }
}
