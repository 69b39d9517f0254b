// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reference bundles produced by an independent implementation, and the
//! cross-check of this engine against them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lens::argmax;
use crate::model::{Capture, Model};
use crate::tokenizer::Tokenizer;

/// Largest tolerated absolute logit difference.
pub const LOGIT_TOLERANCE: f32 = 1e-2;

/// Prompts with reference token ids and final-position logits.
///
/// Logits are stored either in full (`logits`) or as the highest-scoring
/// `(id, value)` entries in descending order (`top_k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBundle {
    pub model: String,
    pub prompts: Vec<String>,
    pub ids: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<Vec<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<Vec<Vec<(u32, f32)>>>,
    #[serde(default)]
    pub checksums: BTreeMap<String, String>,
}

impl ReferenceBundle {
    pub fn read(path: &Path) -> Result<ReferenceBundle> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: ReferenceBundle = serde_json::from_str(&text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    /// Checks that prompts, ids and logits are index-aligned.
    pub fn validate(&self) -> Result<()> {
        let n = self.prompts.len();
        let misaligned =
            |what: &str, len: usize| Error::Precondition(format!("bundle has {n} prompts but {len} {what}"));
        if self.ids.len() != n {
            return Err(misaligned("id sequences", self.ids.len()));
        }
        match (&self.logits, &self.top_k) {
            (Some(l), _) if l.len() != n => Err(misaligned("logit vectors", l.len())),
            (_, Some(k)) if k.len() != n => Err(misaligned("top-k lists", k.len())),
            (None, None) if n > 0 => Err(Error::Precondition("bundle has neither logits nor top_k".into())),
            _ => Ok(()),
        }
    }
}

/// Token ids and final-position logits from this engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryOutput {
    pub ids: Vec<u32>,
    pub logits: Vec<f32>,
}

pub fn primary_outputs(model: &Model, tok: &Tokenizer, prompts: &[String], exec: Exec) -> Result<Vec<PrimaryOutput>> {
    exec.map(prompts, |p| {
        let ids = tok.encode(p);
        let trace = model.forward(&ids, Capture::NONE)?;
        Ok(PrimaryOutput {
            ids,
            logits: trace.final_logits,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptDiff {
    pub index: usize,
    pub ids_equal: bool,
    /// Over the full vector, or over the reference's top-k ids.
    pub max_abs: f32,
    pub top1_reference: u32,
    pub top1_primary: u32,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crosscheck {
    pub pass: bool,
    pub diffs: Vec<PromptDiff>,
}

impl Crosscheck {
    pub fn failures(&self) -> impl Iterator<Item = &PromptDiff> {
        self.diffs.iter().filter(|d| !d.pass)
    }
}

/// Compares id sequences exactly and logits within [`LOGIT_TOLERANCE`]
/// with equal top-1.
pub fn crosscheck(bundle: &ReferenceBundle, primary: &[PrimaryOutput]) -> Result<Crosscheck> {
    bundle.validate()?;
    if primary.len() != bundle.prompts.len() {
        return Err(Error::Precondition(format!(
            "bundle has {} prompts but {} primary outputs",
            bundle.prompts.len(),
            primary.len()
        )));
    }
    let mut diffs = Vec::with_capacity(primary.len());
    for (index, out) in primary.iter().enumerate() {
        let top1_primary = argmax(&out.logits) as u32;
        let (max_abs, top1_reference) = if let Some(all) = &bundle.logits {
            let reference = &all[index];
            if reference.len() != out.logits.len() {
                return Err(Error::Dimension {
                    expected: reference.len(),
                    got: out.logits.len(),
                });
            }
            let max_abs = reference
                .iter()
                .zip(&out.logits)
                .map(|(a, b)| (a - b).abs())
                .fold(0f32, f32::max);
            (max_abs, argmax(reference) as u32)
        } else {
            let top = &bundle.top_k.as_ref().expect("validated")[index];
            let mut max_abs = 0f32;
            for &(id, value) in top {
                let got = *out.logits.get(id as usize).ok_or(Error::Index {
                    index: id as usize,
                    len: out.logits.len(),
                })?;
                max_abs = max_abs.max((got - value).abs());
            }
            (max_abs, top.first().map_or(u32::MAX, |e| e.0))
        };
        let ids_equal = bundle.ids[index] == out.ids;
        diffs.push(PromptDiff {
            index,
            ids_equal,
            max_abs,
            top1_reference,
            top1_primary,
            pass: ids_equal && max_abs <= LOGIT_TOLERANCE && top1_reference == top1_primary,
        });
    }
    Ok(Crosscheck {
        pass: diffs.iter().all(|d| d.pass),
        diffs,
    })
}
