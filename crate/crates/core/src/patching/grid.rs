// SPDX-License-Identifier: MIT OR Apache-2.0

//! Recovery grids over (layer, token) cells and their aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CounterfactualPair, Direction, PairRuns};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cells {
    /// Every token position.
    Full,
    /// Only the replaced token `t_r` and the final token `T`.
    Columns,
}

/// Recovery scores for one pair and direction. `grid[l][c]` is the score
/// for layer `l` and token `columns[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryGrid {
    pub pair_id: String,
    pub hops: usize,
    pub replaced_position: usize,
    pub direction: Direction,
    #[serde(rename = "L")]
    pub n_layers: usize,
    /// Index of the final token.
    #[serde(rename = "T")]
    pub last: usize,
    pub t_r: usize,
    pub columns: Vec<usize>,
    pub grid: Vec<Vec<f64>>,
}

impl RecoveryGrid {
    /// Column of layer values at token `index`, if it was computed.
    pub fn column(&self, index: usize) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|&x| x == index)?;
        Some(self.grid.iter().map(|row| row[c]).collect())
    }

    pub fn get(&self, layer: usize, index: usize) -> Option<f64> {
        let c = self.columns.iter().position(|&x| x == index)?;
        self.grid.get(layer).map(|row| row[c])
    }

    /// Checks the corner cells and the clamp. Returns a description of
    /// the first violation.
    pub fn check_corners(&self, tol: f64) -> std::result::Result<(), String> {
        let near = |v: Option<f64>, want: f64, what: &str| match v {
            Some(x) if (x - want).abs() <= tol => Ok(()),
            Some(x) => Err(format!("{}: {what} = {x}, expected {want}", self.pair_id)),
            None => Err(format!("{}: {what} not computed", self.pair_id)),
        };
        near(self.get(0, self.t_r), 1.0, "Rec(0, t_r)")?;
        near(self.get(self.n_layers, self.last), 1.0, "Rec(L, T)")?;
        for (l, row) in self.grid.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v < 0.0 || v.is_nan() {
                    return Err(format!("{}: Rec({l}, {}) = {v}", self.pair_id, self.columns[c]));
                }
                if self.columns[c] < self.t_r {
                    near(Some(v), 0.0, &format!("Rec({l}, {}) before t_r", self.columns[c]))?;
                }
            }
        }
        Ok(())
    }

    /// Fraction of cells above 1.
    pub fn overshoot_fraction(&self) -> f64 {
        let n = self.grid.iter().map(Vec::len).sum::<usize>();
        let above = self.grid.iter().flatten().filter(|&&v| v > 1.0).count();
        if n == 0 {
            0.0
        } else {
            above as f64 / n as f64
        }
    }
}

/// Fills the requested cells, in parallel across cells.
pub fn patch_grid(
    model: &Model,
    pair: &CounterfactualPair,
    cells: Cells,
    direction: Direction,
) -> Result<RecoveryGrid> {
    let runs = PairRuns::new(model, pair, direction)?;
    let (n_layers, last) = (model.n_layers(), pair.last());
    let columns: Vec<usize> = match cells {
        Cells::Full => (0..=last).collect(),
        Cells::Columns => vec![pair.t_r, last],
    };
    let width = columns.len();
    let scores = model
        .exec()
        .map_range((n_layers + 1) * width, |k| {
            runs.recovery(model, k / width, columns[k % width])
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let grid: Vec<Vec<f64>> = scores.chunks(width).map(<[f64]>::to_vec).collect();
    let out = RecoveryGrid {
        pair_id: pair.id.clone(),
        hops: pair.hops,
        replaced_position: pair.replaced_position,
        direction,
        n_layers,
        last,
        t_r: pair.t_r,
        columns,
        grid,
    };
    log::debug!(
        "{} ({}): {:.1}% of cells above 1",
        out.pair_id,
        direction.as_str(),
        100.0 * out.overshoot_fraction()
    );
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Hops,
    ReplacedPosition,
}

/// Mean recovery per layer at `t_r` and at `T` for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub layer: usize,
    pub mean_rec_tr: f64,
    #[serde(rename = "mean_rec_T")]
    pub mean_rec_t: f64,
    pub n: usize,
}

/// Averages grids column-wise within each group. All grids must come from
/// models of the same depth.
pub fn aggregate_recovery(grids: &[RecoveryGrid], group_by: GroupBy) -> Result<Vec<AggregateRow>> {
    let Some(first) = grids.first() else {
        log::warn!("no grids to aggregate");
        return Ok(Vec::new());
    };
    let n_layers = first.n_layers;
    let mut groups: BTreeMap<usize, Vec<&RecoveryGrid>> = BTreeMap::new();
    for g in grids {
        if g.n_layers != n_layers {
            return Err(Error::Precondition(format!(
                "grid {} has {} layers, expected {n_layers}",
                g.pair_id, g.n_layers
            )));
        }
        let key = match group_by {
            GroupBy::Hops => g.hops,
            GroupBy::ReplacedPosition => g.replaced_position,
        };
        groups.entry(key).or_default().push(g);
    }
    let label = |k: usize| match group_by {
        GroupBy::Hops => format!("hops={k}"),
        GroupBy::ReplacedPosition => format!("position={k}"),
    };
    let mut rows = Vec::new();
    for (key, members) in groups {
        let cols: Vec<(Vec<f64>, Vec<f64>)> = members
            .iter()
            .map(|g| {
                let missing = || Error::Precondition(format!("grid {} lacks a column", g.pair_id));
                Ok((
                    g.column(g.t_r).ok_or_else(missing)?,
                    g.column(g.last).ok_or_else(missing)?,
                ))
            })
            .collect::<Result<_>>()?;
        let n = cols.len();
        for layer in 0..=n_layers {
            let tr = cols.iter().map(|(a, _)| a[layer]).sum::<f64>() / n as f64;
            let t = cols.iter().map(|(_, b)| b[layer]).sum::<f64>() / n as f64;
            rows.push(AggregateRow {
                group: label(key),
                layer,
                mean_rec_tr: tr,
                mean_rec_t: t,
                n,
            });
        }
    }
    Ok(rows)
}

/// First layer whose value falls below `threshold`.
pub fn first_below(values: &[f64], threshold: f64) -> Option<usize> {
    values.iter().position(|&v| v < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(hops: usize, vals: [[f64; 2]; 3]) -> RecoveryGrid {
        RecoveryGrid {
            pair_id: format!("g{hops}"),
            hops,
            replaced_position: 0,
            direction: Direction::Forward,
            n_layers: 2,
            last: 5,
            t_r: 2,
            columns: vec![2, 5],
            grid: vals.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn single_and_duplicate_grids() {
        let g = grid(3, [[1.0, 0.0], [0.4, 0.5], [0.0, 1.0]]);
        let rows = aggregate_recovery(std::slice::from_ref(&g), GroupBy::Hops).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[1].mean_rec_tr, rows[1].mean_rec_t, rows[1].n), (0.4, 0.5, 1));
        let rows2 = aggregate_recovery(&[g.clone(), g], GroupBy::Hops).unwrap();
        assert!(rows2
            .iter()
            .zip(&rows)
            .all(|(a, b)| a.mean_rec_tr == b.mean_rec_tr && a.n == 2));
        assert_eq!(rows2[0].group, "hops=3");
    }

    #[test]
    fn mixed_depths_rejected() {
        let mut g = grid(3, [[1.0, 0.0], [0.4, 0.5], [0.0, 1.0]]);
        let h = g.clone();
        g.n_layers = 5;
        assert!(aggregate_recovery(&[h, g], GroupBy::Hops).is_err());
    }

    #[test]
    fn corner_checks() {
        let g = grid(3, [[1.0, 0.0], [0.4, 0.5], [0.0, 1.0005]]);
        assert!(g.check_corners(1e-3).is_ok());
        assert!((g.overshoot_fraction() - 1.0 / 6.0).abs() < 1e-12);
        let bad = grid(3, [[0.9, 0.0], [0.4, 0.5], [0.0, 1.0]]);
        assert!(bad.check_corners(1e-3).is_err());
    }

    #[test]
    fn first_below_threshold() {
        assert_eq!(first_below(&[1.0, 0.7, 0.4, 0.6], 0.5), Some(2));
        assert_eq!(first_below(&[1.0, 0.7], 0.5), None);
    }
}
