// SPDX-License-Identifier: MIT OR Apache-2.0

//! Measuring how transformers use depth on multi-hop kinship reasoning.
//!
//! - [`kinship`]: family trees, k-hop stories, prompts and counterfactuals.
//! - [`tokenizer`]: byte-level BPE compatible with GPT-2 vocabularies.
//! - [`model`]: pre-LayerNorm decoder inference with residual capture and
//!   hidden-state patching.
//! - [`lens`]: logit-lens readouts and residual-stream metrics.
//! - [`patching`]: flip-pair selection and recovery-score grids.
//! - [`harness`]: experiment runs, cached artifacts and report data.

pub mod error;
pub mod exec;
pub mod harness;
pub mod kinship;
pub mod lens;
pub mod model;
pub mod patching;
pub mod seed;
pub mod tokenizer;

pub use error::{Error, Result};
pub use exec::Exec;
