// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared fixtures: the vendored GPT-2 tokenizer and random toy models over
//! its vocabulary.

use std::path::PathBuf;
use std::sync::OnceLock;

use depthlens::kinship::{generate_dataset, GenConfig, RelationFilter, StoryRecord};
use depthlens::model::{Model, ToyConfig};
use depthlens::tokenizer::Tokenizer;
use depthlens::Exec;

pub const GPT2_VOCAB: usize = 50257;

pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/gpt2")
}

pub fn gpt2_tokenizer() -> &'static Tokenizer {
    static TOK: OnceLock<Tokenizer> = OnceLock::new();
    TOK.get_or_init(|| Tokenizer::from_dir(&assets_dir()).unwrap())
}

/// Random GPT-2 shaped model over the full GPT-2 vocabulary.
pub fn toy_gpt2(n_layers: usize, seed: u64) -> Model {
    ToyConfig {
        init_std: 1.0,
        ..ToyConfig::gpt2(n_layers, 32, GPT2_VOCAB, seed)
    }
    .build()
    .unwrap()
}

pub fn stories(hops: &[usize], per_hop: usize, filter: RelationFilter, seed: u64) -> Vec<StoryRecord> {
    let cfg = GenConfig {
        hops: hops.to_vec(),
        per_hop,
        max_siblings: 4,
        seed,
        filter,
    };
    generate_dataset(&cfg, Exec::Parallel).unwrap()
}
