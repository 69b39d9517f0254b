// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named-tensor manifest: maps container tensor names onto model roles.
//!
//! Names may contain `{layer}`, substituted with the block index. A tensor
//! is looked up under every listed prefix in turn.

use serde::{Deserialize, Serialize};

use super::config::Architecture;

/// How a projection matrix is stored in the container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearLayout {
    /// `[in, out]` (GPT-2 `Conv1D`).
    InOut,
    /// `[out, in]` (`nn.Linear`).
    OutIn,
}

/// How the fused query/key/value projection orders its outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QkvOrder {
    /// `[q(all heads) | k | v]`.
    Blocked,
    /// `[head0: q k v | head1: q k v | ...]`.
    HeadInterleaved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorNames {
    pub tok_embed: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_embed: Option<String>,
    pub ln1_weight: String,
    pub ln1_bias: String,
    pub qkv_weight: String,
    pub qkv_bias: String,
    pub attn_out_weight: String,
    pub attn_out_bias: String,
    pub ln2_weight: String,
    pub ln2_bias: String,
    pub mlp_in_weight: String,
    pub mlp_in_bias: String,
    pub mlp_out_weight: String,
    pub mlp_out_bias: String,
    pub lnf_weight: String,
    pub lnf_bias: String,
    /// Absent when the unembedding is tied to `tok_embed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unembed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightLayout {
    pub architecture: Architecture,
    pub linear: LinearLayout,
    pub qkv: QkvOrder,
    #[serde(default)]
    pub prefixes: Vec<String>,
    pub tensors: TensorNames,
}

impl WeightLayout {
    pub fn gpt2() -> Self {
        let t = |s: &str| s.to_string();
        WeightLayout {
            architecture: Architecture::Gpt2,
            linear: LinearLayout::InOut,
            qkv: QkvOrder::Blocked,
            prefixes: vec![t(""), t("transformer.")],
            tensors: TensorNames {
                tok_embed: t("wte.weight"),
                pos_embed: Some(t("wpe.weight")),
                ln1_weight: t("h.{layer}.ln_1.weight"),
                ln1_bias: t("h.{layer}.ln_1.bias"),
                qkv_weight: t("h.{layer}.attn.c_attn.weight"),
                qkv_bias: t("h.{layer}.attn.c_attn.bias"),
                attn_out_weight: t("h.{layer}.attn.c_proj.weight"),
                attn_out_bias: t("h.{layer}.attn.c_proj.bias"),
                ln2_weight: t("h.{layer}.ln_2.weight"),
                ln2_bias: t("h.{layer}.ln_2.bias"),
                mlp_in_weight: t("h.{layer}.mlp.c_fc.weight"),
                mlp_in_bias: t("h.{layer}.mlp.c_fc.bias"),
                mlp_out_weight: t("h.{layer}.mlp.c_proj.weight"),
                mlp_out_bias: t("h.{layer}.mlp.c_proj.bias"),
                lnf_weight: t("ln_f.weight"),
                lnf_bias: t("ln_f.bias"),
                unembed: None,
            },
        }
    }

    /// GPT-NeoX / Pythia checkpoints.
    pub fn gpt_neox() -> Self {
        let t = |s: &str| s.to_string();
        WeightLayout {
            architecture: Architecture::GptNeox,
            linear: LinearLayout::OutIn,
            qkv: QkvOrder::HeadInterleaved,
            prefixes: vec![t("")],
            tensors: TensorNames {
                tok_embed: t("gpt_neox.embed_in.weight"),
                pos_embed: None,
                ln1_weight: t("gpt_neox.layers.{layer}.input_layernorm.weight"),
                ln1_bias: t("gpt_neox.layers.{layer}.input_layernorm.bias"),
                qkv_weight: t("gpt_neox.layers.{layer}.attention.query_key_value.weight"),
                qkv_bias: t("gpt_neox.layers.{layer}.attention.query_key_value.bias"),
                attn_out_weight: t("gpt_neox.layers.{layer}.attention.dense.weight"),
                attn_out_bias: t("gpt_neox.layers.{layer}.attention.dense.bias"),
                ln2_weight: t("gpt_neox.layers.{layer}.post_attention_layernorm.weight"),
                ln2_bias: t("gpt_neox.layers.{layer}.post_attention_layernorm.bias"),
                mlp_in_weight: t("gpt_neox.layers.{layer}.mlp.dense_h_to_4h.weight"),
                mlp_in_bias: t("gpt_neox.layers.{layer}.mlp.dense_h_to_4h.bias"),
                mlp_out_weight: t("gpt_neox.layers.{layer}.mlp.dense_4h_to_h.weight"),
                mlp_out_bias: t("gpt_neox.layers.{layer}.mlp.dense_4h_to_h.bias"),
                lnf_weight: t("gpt_neox.final_layer_norm.weight"),
                lnf_bias: t("gpt_neox.final_layer_norm.bias"),
                unembed: Some(t("embed_out.weight")),
            },
        }
    }

    pub fn preset(arch: Architecture) -> Self {
        match arch {
            Architecture::Gpt2 => WeightLayout::gpt2(),
            Architecture::GptNeox => WeightLayout::gpt_neox(),
        }
    }

    /// Candidate container names for a (possibly per-layer) role.
    pub fn candidates(&self, pattern: &str, layer: Option<usize>) -> Vec<String> {
        let name = match layer {
            Some(l) => pattern.replace("{layer}", &l.to_string()),
            None => pattern.to_string(),
        };
        if self.prefixes.is_empty() {
            vec![name]
        } else {
            self.prefixes.iter().map(|p| format!("{p}{name}")).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_candidates() {
        let l = WeightLayout::gpt2();
        let back: WeightLayout = serde_json::from_str(&serde_json::to_string(&l).unwrap()).unwrap();
        assert_eq!(back, l);
        assert_eq!(
            l.candidates(&l.tensors.qkv_weight, Some(3)),
            vec!["h.3.attn.c_attn.weight", "transformer.h.3.attn.c_attn.weight"]
        );
    }
}
