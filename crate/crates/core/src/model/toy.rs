// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small random models for tests and benchmarks, stored under the same
//! tensor names as the real checkpoints.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Architecture, ModelConfig};
use super::layout::{LinearLayout, WeightLayout};
use super::weights::TensorMap;
use super::Model;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub architecture: Architecture,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// Fraction of each head rotated (GPT-NeoX only).
    pub rotary_pct: f64,
    /// GPT-NeoX only; GPT-2 is always sequential.
    pub parallel_residual: bool,
    /// Zero query and key projections, making attention uniform.
    pub zero_qk: bool,
    pub init_std: f32,
    pub seed: u64,
}

impl ToyConfig {
    pub fn gpt2(n_layers: usize, d_model: usize, vocab_size: usize, seed: u64) -> Self {
        ToyConfig {
            architecture: Architecture::Gpt2,
            n_layers,
            d_model,
            n_heads: 4,
            d_mlp: 4 * d_model,
            vocab_size,
            max_positions: 512,
            rotary_pct: 1.0,
            parallel_residual: false,
            zero_qk: false,
            init_std: 0.2,
            seed,
        }
    }

    pub fn gpt_neox(n_layers: usize, d_model: usize, vocab_size: usize, seed: u64) -> Self {
        ToyConfig {
            architecture: Architecture::GptNeox,
            rotary_pct: 0.5,
            parallel_residual: true,
            ..ToyConfig::gpt2(n_layers, d_model, vocab_size, seed)
        }
    }

    /// `config.json` in the upstream format.
    pub fn hf_config(&self) -> serde_json::Value {
        match self.architecture {
            Architecture::Gpt2 => json!({
                "model_type": "gpt2",
                "n_layer": self.n_layers,
                "n_embd": self.d_model,
                "n_head": self.n_heads,
                "n_inner": self.d_mlp,
                "vocab_size": self.vocab_size,
                "n_positions": self.max_positions,
                "layer_norm_epsilon": 1e-5,
                "activation_function": "gelu_new",
            }),
            Architecture::GptNeox => json!({
                "model_type": "gpt_neox",
                "num_hidden_layers": self.n_layers,
                "hidden_size": self.d_model,
                "num_attention_heads": self.n_heads,
                "intermediate_size": self.d_mlp,
                "vocab_size": self.vocab_size,
                "max_position_embeddings": self.max_positions,
                "rotary_pct": self.rotary_pct,
                "rotary_emb_base": 10000,
                "use_parallel_residual": self.parallel_residual,
                "hidden_act": "gelu",
                "layer_norm_eps": 1e-5,
                "tie_word_embeddings": false,
            }),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        ModelConfig::from_hf_json(&self.hf_config().to_string())
    }

    /// Random tensors under the architecture's preset names.
    pub fn tensors(&self) -> TensorMap {
        let layout = WeightLayout::preset(self.architecture);
        let t = &layout.tensors;
        let mut rng = seed::rng(self.seed);
        let mut out = TensorMap::new();
        let (d, m, v) = (self.d_model, self.d_mlp, self.vocab_size);
        let amp = self.init_std * 3f32.sqrt();
        let name = |pattern: &str, layer: Option<usize>| layout.candidates(pattern, layer).remove(0);
        let mut put = |rng: &mut rand_chacha::ChaCha8Rng, key: String, shape: Vec<usize>, base: f32, scale: f32| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| base + rng.random_range(-scale..=scale)).collect();
            out.insert(key, (shape, data));
        };
        let mat = |n_in: usize, n_out: usize| match layout.linear {
            LinearLayout::InOut => vec![n_in, n_out],
            LinearLayout::OutIn => vec![n_out, n_in],
        };

        put(&mut rng, name(&t.tok_embed, None), vec![v, d], 0.0, amp);
        if let Some(p) = &t.pos_embed {
            put(&mut rng, name(p, None), vec![self.max_positions, d], 0.0, amp);
        }
        for l in 0..self.n_layers {
            let l = Some(l);
            put(&mut rng, name(&t.ln1_weight, l), vec![d], 1.0, 0.1);
            put(&mut rng, name(&t.ln1_bias, l), vec![d], 0.0, 0.05);
            put(&mut rng, name(&t.qkv_weight, l), mat(d, 3 * d), 0.0, amp);
            put(&mut rng, name(&t.qkv_bias, l), vec![3 * d], 0.0, 0.05);
            put(&mut rng, name(&t.attn_out_weight, l), mat(d, d), 0.0, amp);
            put(&mut rng, name(&t.attn_out_bias, l), vec![d], 0.0, 0.05);
            put(&mut rng, name(&t.ln2_weight, l), vec![d], 1.0, 0.1);
            put(&mut rng, name(&t.ln2_bias, l), vec![d], 0.0, 0.05);
            put(&mut rng, name(&t.mlp_in_weight, l), mat(d, m), 0.0, amp);
            put(&mut rng, name(&t.mlp_in_bias, l), vec![m], 0.0, 0.05);
            put(&mut rng, name(&t.mlp_out_weight, l), mat(m, d), 0.0, amp);
            put(&mut rng, name(&t.mlp_out_bias, l), vec![d], 0.0, 0.05);
        }
        put(&mut rng, name(&t.lnf_weight, None), vec![d], 1.0, 0.1);
        put(&mut rng, name(&t.lnf_bias, None), vec![d], 0.0, 0.05);
        if let Some(u) = &t.unembed {
            put(&mut rng, name(u, None), vec![v, d], 0.0, amp);
        }
        if self.zero_qk {
            self.zero_query_key(&layout, &mut out);
        }
        out
    }

    fn zero_query_key(&self, layout: &WeightLayout, tensors: &mut TensorMap) {
        let (d, hd) = (self.d_model, self.d_model / self.n_heads);
        // fused output index `o` belongs to q or k
        let is_qk = |o: usize| match layout.qkv {
            super::QkvOrder::Blocked => o < 2 * d,
            super::QkvOrder::HeadInterleaved => (o % (3 * hd)) < 2 * hd,
        };
        for l in 0..self.n_layers {
            let w = layout.candidates(&layout.tensors.qkv_weight, Some(l)).remove(0);
            let b = layout.candidates(&layout.tensors.qkv_bias, Some(l)).remove(0);
            let (_, data) = tensors.get_mut(&w).expect("qkv weight present");
            for (idx, x) in data.iter_mut().enumerate() {
                let o = match layout.linear {
                    LinearLayout::InOut => idx % (3 * d),
                    LinearLayout::OutIn => idx / d,
                };
                if is_qk(o) {
                    *x = 0.0;
                }
            }
            let (_, data) = tensors.get_mut(&b).expect("qkv bias present");
            for (o, x) in data.iter_mut().enumerate() {
                if is_qk(o) {
                    *x = 0.0;
                }
            }
        }
    }

    /// Builds the model in memory through the regular loading path.
    pub fn build(&self) -> Result<Model> {
        let layout = WeightLayout::preset(self.architecture);
        Model::from_source(self.model_config()?, &layout, &self.tensors())
    }

    /// Writes `config.json`, `layout.json` and `model.safetensors`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tensors = self.tensors();
        let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
            .into_iter()
            .map(|(k, (shape, data))| {
                let raw = data.iter().flat_map(|x| x.to_le_bytes()).collect();
                (k, shape, raw)
            })
            .collect();
        let views = bytes
            .iter()
            .map(|(k, shape, raw)| {
                safetensors::tensor::TensorView::new(safetensors::Dtype::F32, shape.clone(), raw)
                    .map(|v| (k.clone(), v))
                    .map_err(|e| Error::load(k, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let blob = safetensors::serialize(views, &None::<HashMap<String, String>>)
            .map_err(|e| Error::load("model.safetensors", e.to_string()))?;
        let write = |name: &str, data: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, data).map_err(|e| Error::io(&p, e))
        };
        write("model.safetensors", &blob)?;
        write(
            "config.json",
            serde_json::to_string_pretty(&self.hf_config())?.as_bytes(),
        )?;
        write(
            "layout.json",
            serde_json::to_string_pretty(&WeightLayout::preset(self.architecture))?.as_bytes(),
        )
    }
}
