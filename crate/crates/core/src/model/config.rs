// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model hyper-parameters, parsed from Hugging Face style `config.json`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Positions {
    Learned,
    /// Rotary embeddings on the first `dims` channels of every head.
    Rotary {
        dims: usize,
        base: f32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// tanh approximation (`gelu_new`).
    GeluTanh,
    /// exact erf form.
    Gelu,
}

impl Activation {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "gelu_new" | "gelu_pytorch_tanh" | "gelu_fast" => Ok(Activation::GeluTanh),
            "gelu" => Ok(Activation::Gelu),
            other => Err(Error::Config(format!("unsupported activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Gpt2,
    GptNeox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub ln_eps: f32,
    pub positions: Positions,
    pub activation: Activation,
    /// `h + attn(ln1(h)) + mlp(ln2(h))` instead of sequential sub-blocks.
    pub parallel_residual: bool,
    pub tied_embeddings: bool,
}

fn get_usize(v: &Value, key: &str) -> Result<usize> {
    v.get(key)
        .and_then(Value::as_u64)
        .map(|x| x as usize)
        .ok_or_else(|| Error::Config(format!("config missing integer `{key}`")))
}

fn get_f64(v: &Value, key: &str, default: f64) -> f64 {
    v.get(key).and_then(Value::as_f64).unwrap_or(default)
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if let Positions::Rotary { dims, .. } = self.positions {
            if dims > self.head_dim() || dims % 2 != 0 {
                return Err(Error::Config(format!("invalid rotary dims {dims}")));
            }
        }
        Ok(())
    }

    /// Parses a `config.json` for GPT-2 or GPT-NeoX (Pythia) checkpoints.
    pub fn from_hf_json(text: &str) -> Result<ModelConfig> {
        let v: Value = serde_json::from_str(text)?;
        let model_type = v.get("model_type").and_then(Value::as_str).unwrap_or("");
        let cfg = match model_type {
            "gpt2" => {
                let d_model = get_usize(&v, "n_embd")?;
                ModelConfig {
                    architecture: Architecture::Gpt2,
                    n_layers: get_usize(&v, "n_layer")?,
                    d_model,
                    n_heads: get_usize(&v, "n_head")?,
                    d_mlp: v
                        .get("n_inner")
                        .and_then(Value::as_u64)
                        .map_or(4 * d_model, |x| x as usize),
                    vocab_size: get_usize(&v, "vocab_size")?,
                    max_positions: get_usize(&v, "n_positions")?,
                    ln_eps: get_f64(&v, "layer_norm_epsilon", 1e-5) as f32,
                    positions: Positions::Learned,
                    activation: Activation::parse(
                        v.get("activation_function")
                            .and_then(Value::as_str)
                            .unwrap_or("gelu_new"),
                    )?,
                    parallel_residual: false,
                    tied_embeddings: true,
                }
            }
            "gpt_neox" => {
                let d_model = get_usize(&v, "hidden_size")?;
                let n_heads = get_usize(&v, "num_attention_heads")?;
                let head_dim = d_model / n_heads.max(1);
                // newer exports nest rotary settings under `rope_parameters`
                let rope = v.get("rope_parameters").cloned().unwrap_or(Value::Null);
                let pct = rope
                    .get("partial_rotary_factor")
                    .and_then(Value::as_f64)
                    .unwrap_or_else(|| get_f64(&v, "rotary_pct", 1.0));
                let base = rope
                    .get("rope_theta")
                    .and_then(Value::as_f64)
                    .unwrap_or_else(|| get_f64(&v, "rotary_emb_base", 10_000.0));
                ModelConfig {
                    architecture: Architecture::GptNeox,
                    n_layers: get_usize(&v, "num_hidden_layers")?,
                    d_model,
                    n_heads,
                    d_mlp: get_usize(&v, "intermediate_size")?,
                    vocab_size: get_usize(&v, "vocab_size")?,
                    max_positions: get_usize(&v, "max_position_embeddings")?,
                    ln_eps: get_f64(&v, "layer_norm_eps", 1e-5) as f32,
                    positions: Positions::Rotary {
                        dims: (head_dim as f64 * pct) as usize,
                        base: base as f32,
                    },
                    activation: Activation::parse(v.get("hidden_act").and_then(Value::as_str).unwrap_or("gelu"))?,
                    parallel_residual: v.get("use_parallel_residual").and_then(Value::as_bool).unwrap_or(true),
                    tied_embeddings: v.get("tie_word_embeddings").and_then(Value::as_bool).unwrap_or(false),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unsupported architecture `{other}`; only pre-LN gpt2 and gpt_neox load"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gpt2_small_config() {
        let text = r#"{"model_type":"gpt2","n_layer":12,"n_embd":768,"n_head":12,
            "vocab_size":50257,"n_positions":1024,"layer_norm_epsilon":1e-5,
            "activation_function":"gelu_new","n_inner":null}"#;
        let c = ModelConfig::from_hf_json(text).unwrap();
        assert_eq!((c.n_layers, c.d_model, c.d_mlp, c.head_dim()), (12, 768, 3072, 64));
        assert!(c.tied_embeddings && !c.parallel_residual);
    }

    #[test]
    fn pythia_config() {
        let text = r#"{"model_type":"gpt_neox","num_hidden_layers":12,"hidden_size":768,
            "num_attention_heads":12,"intermediate_size":3072,"vocab_size":50304,
            "max_position_embeddings":2048,"rotary_pct":0.25,"rotary_emb_base":10000,
            "use_parallel_residual":true,"hidden_act":"gelu","layer_norm_eps":1e-5}"#;
        let c = ModelConfig::from_hf_json(text).unwrap();
        assert_eq!(
            c.positions,
            Positions::Rotary {
                dims: 16,
                base: 10000.0
            }
        );
        assert!(c.parallel_residual && !c.tied_embeddings);
        let nested = text.replace(
            r#""rotary_pct":0.25,"rotary_emb_base":10000"#,
            r#""rope_parameters":{"partial_rotary_factor":0.5,"rope_theta":500.0}"#,
        );
        let c = ModelConfig::from_hf_json(&nested).unwrap();
        assert_eq!(c.positions, Positions::Rotary { dims: 32, base: 500.0 });
    }

    #[test]
    fn rejects_unknown_and_bad_shapes() {
        assert!(ModelConfig::from_hf_json(r#"{"model_type":"llama"}"#).is_err());
        let bad = r#"{"model_type":"gpt2","n_layer":2,"n_embd":30,"n_head":4,
            "vocab_size":10,"n_positions":8}"#;
        assert!(ModelConfig::from_hf_json(bad).is_err());
    }
}
