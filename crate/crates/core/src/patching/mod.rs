// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counterfactual pairs, recovery scores and recovery grids.
//!
//! A pair consists of an original prompt `a` and a copy `b` with a single
//! relation word replaced. Patching copies one residual state of one run
//! into the other and measures how much of the source prediction returns:
//!
//! `Rec = max(0, (ld_patch - ld_target) / (ld_source - ld_target))`
//!
//! with `ld = logit[o] - logit[c]` at the final position.

mod grid;
mod pairs;

pub use grid::{aggregate_recovery, first_below, patch_grid, AggregateRow, Cells, GroupBy, RecoveryGrid};
pub use pairs::{find_flip_pairs, CounterfactualPair, FlipSearch, MutationMode, PreparedPrompt, SearchCounts};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Capture, Model, PatchSpec, ResidualTrace};

/// Pairs whose baseline logit differences are closer than this are rejected.
pub const MIN_DENOMINATOR: f64 = 1e-6;

/// Which run donates the patched state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Original state into the counterfactual run.
    Forward,
    /// Counterfactual state into the original run.
    Reverse,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Reverse];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

fn logit_diff(logits: &[f32], o: u32, c: u32) -> f64 {
    logits[o as usize] as f64 - logits[c as usize] as f64
}

/// Both unpatched traces of a pair, oriented for one direction.
pub struct PairRuns {
    pub direction: Direction,
    pub source: ResidualTrace,
    pub target: ResidualTrace,
    /// Top-1 of the source run (`o` for forward patching).
    pub source_top: u32,
    /// Top-1 of the target run (`c` for forward patching).
    pub target_top: u32,
    pub ld_source: f64,
    pub ld_target: f64,
}

impl PairRuns {
    pub fn new(model: &Model, pair: &CounterfactualPair, direction: Direction) -> Result<Self> {
        let a = model.forward(&pair.ids_a, Capture::NONE)?;
        let b = model.forward(&pair.ids_b, Capture::NONE)?;
        let (source, target, s_top, t_top) = match direction {
            Direction::Forward => (a, b, pair.o, pair.c),
            Direction::Reverse => (b, a, pair.c, pair.o),
        };
        let ld_source = logit_diff(&source.final_logits, s_top, t_top);
        let ld_target = logit_diff(&target.final_logits, s_top, t_top);
        if ld_source - ld_target < MIN_DENOMINATOR {
            return Err(Error::Precondition(format!(
                "pair {}: degenerate logit difference {:.3e}",
                pair.id,
                ld_source - ld_target
            )));
        }
        Ok(PairRuns {
            direction,
            source,
            target,
            source_top: s_top,
            target_top: t_top,
            ld_source,
            ld_target,
        })
    }

    /// Score from final logits of a patched run.
    pub fn score(&self, patched_logits: &[f32]) -> f64 {
        let ld = logit_diff(patched_logits, self.source_top, self.target_top);
        ((ld - self.ld_target) / (self.ld_source - self.ld_target)).max(0.0)
    }

    /// Recovery after patching `h[layer][index]` from source into target.
    pub fn recovery(&self, model: &Model, layer: usize, index: usize) -> Result<f64> {
        let spec = PatchSpec {
            source: &self.source,
            layer,
            index,
        };
        Ok(self.score(&model.patched_logits(&self.target, &spec)?))
    }
}

/// Recovery score of a single cell, in the forward direction.
pub fn recovery_score(model: &Model, pair: &CounterfactualPair, layer: usize, index: usize) -> Result<f64> {
    PairRuns::new(model, pair, Direction::Forward)?.recovery(model, layer, index)
}
