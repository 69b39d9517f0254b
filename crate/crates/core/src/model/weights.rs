// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loading models from safetensors containers.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use safetensors::{Dtype, SafeTensors};

use super::config::ModelConfig;
use super::layout::{LinearLayout, QkvOrder, WeightLayout};
use super::ops::{LayerNorm, Linear};
use super::{Block, Model};
use crate::error::{Error, Result};

/// Anything that can produce named f32 tensors with their shapes.
pub trait TensorSource {
    /// `Ok(None)` when the name is absent.
    fn fetch(&self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>>;
}

/// In-memory tensors, keyed by container name.
pub type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

impl TensorSource for TensorMap {
    fn fetch(&self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        Ok(self.get(name).cloned())
    }
}

struct SafetensorFiles {
    maps: Vec<(PathBuf, Mmap)>,
}

impl SafetensorFiles {
    fn open(paths: &[PathBuf]) -> Result<Self> {
        let mut maps = Vec::with_capacity(paths.len());
        for path in paths {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            // SAFETY: the file is opened read-only and not modified while mapped.
            let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
            SafeTensors::deserialize(&map)
                .map_err(|e| Error::load(path.display().to_string(), format!("invalid container: {e}")))?;
            maps.push((path.clone(), map));
        }
        Ok(SafetensorFiles { maps })
    }
}

fn to_f32(name: &str, dtype: Dtype, bytes: &[u8]) -> Result<Vec<f32>> {
    let words = |n: usize| bytes.chunks_exact(n);
    Ok(match dtype {
        Dtype::F32 => words(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        Dtype::F16 => words(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Dtype::BF16 => words(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        other => return Err(Error::load(name, format!("unsupported dtype {other:?}"))),
    })
}

impl TensorSource for SafetensorFiles {
    fn fetch(&self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        for (path, map) in &self.maps {
            let st = SafeTensors::deserialize(map)
                .map_err(|e| Error::load(path.display().to_string(), format!("invalid container: {e}")))?;
            if let Ok(view) = st.tensor(name) {
                let data = to_f32(name, view.dtype(), view.data())?;
                return Ok(Some((view.shape().to_vec(), data)));
            }
        }
        Ok(None)
    }
}

struct Assembler<'a, S: TensorSource + ?Sized> {
    src: &'a S,
    layout: &'a WeightLayout,
}

impl<S: TensorSource + ?Sized> Assembler<'_, S> {
    fn get(&self, pattern: &str, layer: Option<usize>, shape: &[usize]) -> Result<Vec<f32>> {
        let names = self.layout.candidates(pattern, layer);
        for name in &names {
            if let Some((got, data)) = self.src.fetch(name)? {
                if got != shape {
                    return Err(Error::load(name, format!("shape {got:?}, expected {shape:?}")));
                }
                return Ok(data);
            }
        }
        Err(Error::load(&names[0], "missing tensor"))
    }

    /// Reads a projection and returns it as `[out, in]`.
    fn matrix(&self, pattern: &str, layer: usize, n_in: usize, n_out: usize) -> Result<Vec<f32>> {
        match self.layout.linear {
            LinearLayout::OutIn => self.get(pattern, Some(layer), &[n_out, n_in]),
            LinearLayout::InOut => {
                let w = self.get(pattern, Some(layer), &[n_in, n_out])?;
                Ok(transpose(&w, n_in, n_out))
            }
        }
    }

    fn linear(&self, w: &str, b: &str, layer: usize, n_in: usize, n_out: usize) -> Result<Linear> {
        Ok(Linear {
            n_in,
            n_out,
            weight: self.matrix(w, layer, n_in, n_out)?,
            bias: Some(self.get(b, Some(layer), &[n_out])?),
        })
    }

    fn norm(&self, w: &str, b: &str, layer: Option<usize>, d: usize, eps: f32) -> Result<LayerNorm> {
        Ok(LayerNorm {
            weight: self.get(w, layer, &[d])?,
            bias: self.get(b, layer, &[d])?,
            eps,
        })
    }
}

fn transpose(w: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0f32; w.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = w[r * cols + c];
        }
    }
    out
}

/// Splits a fused `[3d, d]` projection (and its bias) into q, k, v rows.
fn split_qkv(weight: &[f32], bias: &[f32], d: usize, n_heads: usize, order: QkvOrder) -> [Linear; 3] {
    let hd = d / n_heads;
    // source row for output row `r` of part `p`
    let src = |p: usize, r: usize| match order {
        QkvOrder::Blocked => p * d + r,
        QkvOrder::HeadInterleaved => (r / hd) * 3 * hd + p * hd + r % hd,
    };
    [0, 1, 2].map(|p| {
        let mut w = Vec::with_capacity(d * d);
        let mut b = Vec::with_capacity(d);
        for r in 0..d {
            let s = src(p, r);
            w.extend_from_slice(&weight[s * d..(s + 1) * d]);
            b.push(bias[s]);
        }
        Linear {
            n_in: d,
            n_out: d,
            weight: w,
            bias: Some(b),
        }
    })
}

impl Model {
    /// Assembles a model from named tensors under `layout`.
    pub fn from_source<S: TensorSource + ?Sized>(config: ModelConfig, layout: &WeightLayout, src: &S) -> Result<Model> {
        config.validate()?;
        if layout.architecture != config.architecture {
            return Err(Error::Config(format!(
                "layout is for {:?}, config for {:?}",
                layout.architecture, config.architecture
            )));
        }
        let a = Assembler { src, layout };
        let t = &layout.tensors;
        let (d, v, m, eps) = (config.d_model, config.vocab_size, config.d_mlp, config.ln_eps);

        let tok_embed = Linear {
            n_in: d,
            n_out: v,
            weight: a.get(&t.tok_embed, None, &[v, d])?,
            bias: None,
        };
        let pos_embed = match (&t.pos_embed, config.positions) {
            (Some(name), super::Positions::Learned) => Some(a.get(name, None, &[config.max_positions, d])?),
            (None, super::Positions::Learned) => {
                return Err(Error::Config("learned positions need a pos_embed tensor".into()))
            }
            _ => None,
        };

        let mut blocks = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let qkv_w = a.matrix(&t.qkv_weight, l, d, 3 * d)?;
            let qkv_b = a.get(&t.qkv_bias, Some(l), &[3 * d])?;
            let [q, k, vv] = split_qkv(&qkv_w, &qkv_b, d, config.n_heads, layout.qkv);
            blocks.push(Block {
                ln1: a.norm(&t.ln1_weight, &t.ln1_bias, Some(l), d, eps)?,
                q,
                k,
                v: vv,
                o: a.linear(&t.attn_out_weight, &t.attn_out_bias, l, d, d)?,
                ln2: a.norm(&t.ln2_weight, &t.ln2_bias, Some(l), d, eps)?,
                fc: a.linear(&t.mlp_in_weight, &t.mlp_in_bias, l, d, m)?,
                proj: a.linear(&t.mlp_out_weight, &t.mlp_out_bias, l, m, d)?,
            });
        }
        let ln_f = a.norm(&t.lnf_weight, &t.lnf_bias, None, d, eps)?;
        let unembed = match (&t.unembed, config.tied_embeddings) {
            (Some(name), false) => Some(Linear {
                n_in: d,
                n_out: v,
                weight: a.get(name, None, &[v, d])?,
                bias: None,
            }),
            _ => None,
        };
        Ok(Model::from_parts(config, tok_embed, pos_embed, blocks, ln_f, unembed))
    }
}

/// Loads a model from a config, safetensors files and an optional layout
/// (defaults to the architecture preset).
pub fn load_model(config: ModelConfig, files: &[PathBuf], layout: Option<WeightLayout>) -> Result<Model> {
    if files.is_empty() {
        return Err(Error::Config("no weight files given".into()));
    }
    let layout = layout.unwrap_or_else(|| WeightLayout::preset(config.architecture));
    let src = SafetensorFiles::open(files)?;
    Model::from_source(config, &layout, &src)
}

/// Loads `config.json`, an optional `layout.json` and every `*.safetensors`
/// file from a directory.
pub fn load_model_dir(dir: &Path) -> Result<Model> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let config = ModelConfig::from_hf_json(&read(&dir.join("config.json"))?)?;
    let layout_path = dir.join("layout.json");
    let layout = if layout_path.exists() {
        Some(serde_json::from_str(&read(&layout_path)?)?)
    } else {
        None
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "safetensors"))
        .collect();
    files.sort();
    load_model(config, &files, layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleaved_split_recovers_heads() {
        // d = 4, two heads of width 2; row value encodes (part, out-row)
        let (d, heads) = (4, 2);
        let mut weight = vec![0f32; 3 * d * d];
        let mut bias = vec![0f32; 3 * d];
        for head in 0..heads {
            for p in 0..3 {
                for i in 0..2 {
                    let s = head * 6 + p * 2 + i;
                    let tag = (p * 10 + head * 2 + i) as f32;
                    weight[s * d..(s + 1) * d].fill(tag);
                    bias[s] = tag;
                }
            }
        }
        let parts = split_qkv(&weight, &bias, d, heads, QkvOrder::HeadInterleaved);
        for (p, lin) in parts.iter().enumerate() {
            for r in 0..d {
                assert_eq!(lin.row(r)[0], (p * 10 + r) as f32);
                assert_eq!(lin.bias.as_ref().unwrap()[r], (p * 10 + r) as f32);
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let w: Vec<f32> = (0..6).map(|x| x as f32).collect();
        assert_eq!(transpose(&transpose(&w, 2, 3), 3, 2), w);
        assert_eq!(transpose(&w, 2, 3), vec![0., 3., 1., 4., 2., 5.]);
    }

    #[test]
    fn half_precision_conversion() {
        let bytes: Vec<u8> = [1.5f32, -2.0]
            .iter()
            .flat_map(|v| half::f16::from_f32(*v).to_le_bytes())
            .collect();
        assert_eq!(to_f32("x", Dtype::F16, &bytes).unwrap(), vec![1.5, -2.0]);
        let bytes: Vec<u8> = [0.25f32]
            .iter()
            .flat_map(|v| half::bf16::from_f32(*v).to_le_bytes())
            .collect();
        assert_eq!(to_f32("x", Dtype::BF16, &bytes).unwrap(), vec![0.25]);
        assert!(to_f32("x", Dtype::I64, &[0; 8]).is_err());
    }
}
