// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown person id {0}")]
    UnknownPerson(usize),

    #[error("no valid {hops}-hop chain found in tree after {attempts} attempts")]
    SamplingExhausted { hops: usize, attempts: usize },

    #[error("mutation error: {0}")]
    Mutation(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("tokenizer format error: {0}")]
    TokenizerFormat(String),

    #[error("token id {0} out of range")]
    Decode(u32),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("span {start}..{end} does not align with a token boundary")]
    Alignment { start: usize, end: usize },

    #[error("model load error for `{tensor}`: {reason}")]
    Load { tensor: String, reason: String },

    #[error("sequence of {len} tokens exceeds max positions {max}")]
    Length { len: usize, max: usize },

    #[error("patch error: {0}")]
    Patch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(tensor: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            tensor: tensor.into(),
            reason: reason.into(),
        }
    }
}
