// SPDX-License-Identifier: MIT OR Apache-2.0

//! Logit-lens readouts and per-layer metrics over a [`ResidualTrace`].
//!
//! Intermediate states are decoded exactly like the last one: the final
//! LayerNorm (with its gain and bias) followed by the unembedding.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ResidualTrace};

/// Softmax in f64 over f32 logits.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&x| (x as f64 - lse).exp()).collect()
}

fn log_sum_exp(logits: &[f32]) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x as f64));
    max + logits.iter().map(|&x| (x as f64 - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_layer(trace: &ResidualTrace, layer: usize) -> Result<()> {
    if layer > trace.n_layers {
        return Err(Error::Index {
            index: layer,
            len: trace.n_layers + 1,
        });
    }
    Ok(())
}

/// Lens logits `W_U · LN_f(h[layer][T])`.
pub fn lens_logits(model: &Model, trace: &ResidualTrace, layer: usize) -> Result<Vec<f32>> {
    check_layer(trace, layer)?;
    model.readout(trace.hidden(layer, trace.last()))
}

/// Lens distribution over the vocabulary at the last position.
pub fn lens_distribution(model: &Model, trace: &ResidualTrace, layer: usize) -> Result<Vec<f64>> {
    Ok(softmax(&lens_logits(model, trace, layer)?))
}

/// Metrics of one lens readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerLens {
    pub layer: usize,
    /// Probability mass on the answer-set tokens.
    pub p_fam: f64,
    /// Probability of the gold token.
    pub p_gold: f64,
    pub is_correct: bool,
    pub is_constrained_correct: bool,
    /// Natural-log entropy of the full distribution.
    pub entropy: f64,
    pub top_token: u32,
    /// Highest-scoring answer-set token.
    pub top_family_token: u32,
}

/// Lens metrics for each layer `0..=L` at the last position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensProfile {
    pub gold_id: u32,
    pub layers: Vec<LayerLens>,
}

/// One row of the lens CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensRow {
    pub story_id: String,
    pub hops: usize,
    pub layer: usize,
    pub p_fam: f64,
    pub is_correct: bool,
    pub is_constrained_correct: bool,
    pub entropy: f64,
    pub top_token: u32,
}

fn check_family(gold_id: u32, fam_ids: &[u32]) -> Result<()> {
    if !fam_ids.contains(&gold_id) {
        return Err(Error::Precondition(format!(
            "gold token {gold_id} is not in the answer set"
        )));
    }
    Ok(())
}

/// Metrics for one vector of logits.
pub fn layer_lens(layer: usize, logits: &[f32], gold_id: u32, fam_ids: &[u32]) -> Result<LayerLens> {
    check_family(gold_id, fam_ids)?;
    if let Some(&bad) = fam_ids.iter().find(|&&id| id as usize >= logits.len()) {
        return Err(Error::Index {
            index: bad as usize,
            len: logits.len(),
        });
    }
    let lse = log_sum_exp(logits);
    let mut entropy = 0.0;
    for &x in logits {
        let lp = x as f64 - lse;
        let p = lp.exp();
        if p > 0.0 {
            entropy -= p * lp;
        }
    }
    let prob = |id: u32| (logits[id as usize] as f64 - lse).exp();
    let p_fam = fam_ids.iter().map(|&id| prob(id)).sum::<f64>().min(1.0);
    let top_token = argmax(logits) as u32;
    let top_family_token = fam_ids
        .iter()
        .copied()
        .fold(None::<u32>, |best, id| match best {
            Some(b) if logits[b as usize] > logits[id as usize] => Some(b),
            Some(b) if logits[b as usize] == logits[id as usize] && b < id => Some(b),
            _ => Some(id),
        })
        .expect("answer set is not empty");
    Ok(LayerLens {
        layer,
        p_fam,
        p_gold: prob(gold_id),
        is_correct: top_token == gold_id,
        is_constrained_correct: top_family_token == gold_id,
        entropy: entropy.max(0.0),
        top_token,
        top_family_token,
    })
}

/// Lens metrics at every layer of `trace`.
pub fn lens_profile(model: &Model, trace: &ResidualTrace, gold_id: u32, fam_ids: &[u32]) -> Result<LensProfile> {
    check_family(gold_id, fam_ids)?;
    let layers = (0..=trace.n_layers)
        .map(|l| layer_lens(l, &lens_logits(model, trace, l)?, gold_id, fam_ids))
        .collect::<Result<Vec<_>>>()?;
    Ok(LensProfile { gold_id, layers })
}

impl LensProfile {
    pub fn rows(&self, story_id: &str, hops: usize) -> Vec<LensRow> {
        self.layers
            .iter()
            .map(|m| LensRow {
                story_id: story_id.to_string(),
                hops,
                layer: m.layer,
                p_fam: m.p_fam,
                is_correct: m.is_correct,
                is_constrained_correct: m.is_constrained_correct,
                entropy: m.entropy,
                top_token: m.top_token,
            })
            .collect()
    }
}

/// Writes rows with the fixed lens CSV header.
pub fn write_lens_csv<W: Write>(out: W, rows: &[LensRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<lens csv>", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsMode {
    FinalToken,
    AllTokensMean,
}

/// Size and direction of one block's update relative to its input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerResidual {
    /// Block index `l ∈ 1..=L`.
    pub layer: usize,
    /// `‖Δ_l‖ / ‖h_{l-1}‖`, 0 when `h_{l-1}` is zero.
    pub ratio: f64,
    /// Cosine of `Δ_l` and `h_{l-1}`, 0 when either is zero.
    pub cossim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualMetrics {
    pub mode: MetricsMode,
    pub layers: Vec<LayerResidual>,
}

/// Ratio and cosine for one update `delta` applied to `prev`.
pub fn contribution(delta: &[f32], prev: &[f32]) -> (f64, f64) {
    let (mut dd, mut pp, mut dp) = (0f64, 0f64, 0f64);
    for (&d, &p) in delta.iter().zip(prev) {
        let (d, p) = (d as f64, p as f64);
        dd += d * d;
        pp += p * p;
        dp += d * p;
    }
    let (nd, np) = (dd.sqrt(), pp.sqrt());
    let ratio = if np == 0.0 { 0.0 } else { nd / np };
    let cos = if nd == 0.0 || np == 0.0 {
        0.0
    } else {
        (dp / (nd * np)).clamp(-1.0, 1.0)
    };
    (ratio, cos)
}

/// Per-layer update metrics. Uses captured `Δ_l` when present, otherwise
/// the difference of consecutive hidden states.
pub fn residual_metrics(trace: &ResidualTrace, mode: MetricsMode) -> ResidualMetrics {
    let positions: Vec<usize> = match mode {
        MetricsMode::FinalToken => vec![trace.last()],
        MetricsMode::AllTokensMean => (0..trace.seq_len).collect(),
    };
    let layers = (1..=trace.n_layers)
        .map(|l| {
            let (mut ratio, mut cossim) = (0.0, 0.0);
            for &t in &positions {
                let prev = trace.hidden(l - 1, t);
                let (r, c) = match trace.delta(l, t) {
                    Some(delta) => contribution(delta, prev),
                    None => {
                        let diff: Vec<f32> = trace.hidden(l, t).iter().zip(prev).map(|(a, b)| a - b).collect();
                        contribution(&diff, prev)
                    }
                };
                ratio += r;
                cossim += c;
            }
            let n = positions.len() as f64;
            LayerResidual {
                layer: l,
                ratio: ratio / n,
                cossim: cossim / n,
            }
        })
        .collect();
    ResidualMetrics { mode, layers }
}

/// Head-averaged attention from queries `q ≥ key` onto one key position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub key: usize,
    /// `values[l-1][q - key]` for block `l` and query `q`.
    pub values: Vec<Vec<f64>>,
}

pub fn attention_to_token(trace: &ResidualTrace, key: usize) -> Result<AttentionProfile> {
    if !trace.has_attention() {
        return Err(Error::Capability(
            "attention weights were not captured for this trace".into(),
        ));
    }
    if key >= trace.seq_len {
        return Err(Error::Index {
            index: key,
            len: trace.seq_len,
        });
    }
    let values = (1..=trace.n_layers)
        .map(|l| {
            (key..trace.seq_len)
                .map(|q| {
                    let sum: f64 = (0..trace.n_heads)
                        .map(|h| trace.attention(l, h, q, key).unwrap_or(0.0) as f64)
                        .sum();
                    sum / trace.n_heads as f64
                })
                .collect()
        })
        .collect();
    Ok(AttentionProfile { key, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_toy_vocab() {
        let m = layer_lens(0, &[2f32.ln(), 0.0, 0.0], 0, &[0]).unwrap();
        assert!((m.p_fam - 0.5).abs() < 1e-7);
        let want = -(0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        assert!((m.entropy - want).abs() < 1e-7);
        assert!((want - 1.0397).abs() < 1e-4);
        assert!(m.is_correct && m.is_constrained_correct);
    }

    #[test]
    fn uniform_logits_break_ties_low() {
        let m = layer_lens(3, &[0.5; 10], 4, &[7, 4, 2]).unwrap();
        assert!((m.entropy - 10f64.ln()).abs() < 1e-12);
        assert_eq!(m.top_token, 0);
        assert_eq!(m.top_family_token, 2);
        assert!(!m.is_correct && !m.is_constrained_correct);
    }

    #[test]
    fn point_mass_has_zero_entropy() {
        let m = layer_lens(0, &[0.0, 1e4, 0.0], 1, &[1]).unwrap();
        assert_eq!(m.entropy, 0.0);
        assert_eq!(m.p_fam, 1.0);
    }

    #[test]
    fn gold_outside_answer_set_is_rejected() {
        assert!(layer_lens(0, &[0.0; 4], 3, &[0, 1]).is_err());
    }

    #[test]
    fn contribution_conventions() {
        let h = [3.0f32, 4.0];
        assert_eq!(contribution(&[0.0, 0.0], &h), (0.0, 0.0));
        let (r, c) = contribution(&h, &h);
        assert!((r - 1.0).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        let (r, c) = contribution(&[-4.0, 3.0], &h);
        assert!((r - 1.0).abs() < 1e-12 && c.abs() < 1e-6);
        assert_eq!(contribution(&h, &[0.0, 0.0]), (0.0, 0.0));
    }
}
