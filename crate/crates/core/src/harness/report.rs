// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plot-ready tables and the qualitative summary for a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{RunManifest, GRID_DIR, LENS_FILE, METRICS_FILE};
use crate::error::{Error, Result};
use crate::lens::{LensRow, MetricsMode};
use crate::patching::{first_below, AggregateRow, Direction, RecoveryGrid};

pub const REPORT_DIR: &str = "report";
/// Threshold on the mean `t_r` recovery that marks where information has
/// moved on from the replaced token.
pub const DROP_THRESHOLD: f64 = 0.5;
/// Hop counts compared by the earlier-drop check.
pub const DROP_HOPS: [usize; 3] = [3, 5, 7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Inputs for the check are not part of this run.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    fn new(name: &str, status: CheckStatus, detail: String) -> Self {
        Check {
            name: name.to_string(),
            status,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
        };
        format!("{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Serialize)]
struct FamilyProbRow<'a> {
    model: &'a str,
    layer: usize,
    mean_p_fam: f64,
}

#[derive(Debug, Serialize)]
struct FamilyProbHopRow<'a> {
    model: &'a str,
    hops: usize,
    layer: usize,
    mean_p_fam: f64,
}

#[derive(Debug, Serialize)]
struct LensHopRow<'a> {
    model: &'a str,
    hops: usize,
    layer: usize,
    mean_p_fam: f64,
    accuracy: f64,
    constrained_accuracy: f64,
    mean_entropy: f64,
    n: usize,
}

#[derive(Debug, Deserialize)]
struct MetricsIn {
    hops: usize,
    mode: MetricsMode,
    layer: usize,
    ratio: f64,
    cossim: f64,
}

#[derive(Debug, Serialize)]
struct MetricsOut<'a> {
    model: &'a str,
    hops: usize,
    mode: MetricsMode,
    layer: usize,
    mean_ratio: f64,
    mean_cossim: f64,
    n: usize,
}

#[derive(Debug, Serialize)]
struct RecoveryRow {
    group: String,
    layer: usize,
    position: &'static str,
    mean_rec: f64,
}

#[derive(Debug, Serialize)]
struct GridCell<'a> {
    pair_id: &'a str,
    direction: Direction,
    hops: usize,
    replaced_position: usize,
    layer: usize,
    token: usize,
    rec: f64,
}

/// The final-layer dip: the layer with the highest mean `p_fam` lies
/// below the last layer and beats the last layer's mean.
pub fn final_layer_dip(means: &[f64]) -> Check {
    let name = "final_layer_dip";
    if means.len() < 2 {
        return Check::new(name, CheckStatus::Skip, "no lens layers".into());
    }
    let last = means.len() - 1;
    let best = (0..means.len()).fold(0, |b, l| if means[l] > means[b] { l } else { b });
    let pass = best < last && means[best] > means[last];
    let status = if pass { CheckStatus::Pass } else { CheckStatus::Fail };
    Check::new(
        name,
        status,
        format!(
            "max mean p_fam {:.4} at layer {best}, layer {last} mean {:.4}",
            means[best], means[last]
        ),
    )
}

/// Earlier drop with more hops: the first layer where the mean `t_r`
/// recovery falls below the threshold is weakly non-increasing in hops.
/// A curve that never drops counts as dropping after the last layer.
pub fn earlier_drop(curves: &[(usize, Vec<f64>)]) -> Check {
    let name = "earlier_tr_drop_with_hops";
    if curves.len() < 2 {
        return Check::new(name, CheckStatus::Skip, "fewer than two hop groups".into());
    }
    let firsts: Vec<(usize, usize)> = curves
        .iter()
        .map(|(h, c)| (*h, first_below(c, DROP_THRESHOLD).unwrap_or(c.len())))
        .collect();
    let pass = firsts.windows(2).all(|w| w[1].1 <= w[0].1);
    let detail = firsts
        .iter()
        .map(|(h, l)| format!("hops={h}: layer {l}"))
        .collect::<Vec<_>>()
        .join(", ");
    let status = if pass { CheckStatus::Pass } else { CheckStatus::Fail };
    Check::new(name, status, detail)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.push(format!("{REPORT_DIR}/{name}"));
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Writes the report bundle under `<run>/report`.
pub fn emit_report(manifest: &RunManifest) -> Result<ReportBundle> {
    let cfg = &manifest.config;
    let modes = cfg.modes;
    let mut required = vec!["generate"];
    if modes.lens || modes.metrics {
        required.push("lens");
    }
    if modes.patch {
        required.extend(["pairs", "patch"]);
    }
    let missing: Vec<&str> = required.into_iter().filter(|s| !manifest.stage_complete(s)).collect();
    if !missing.is_empty() {
        return Err(Error::Report(format!(
            "incomplete run, missing stages: {}",
            missing.join(", ")
        )));
    }
    let run = manifest.run_dir();
    let dir = run.join(REPORT_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let model = manifest.model.as_str();
    let n_layers = manifest.n_layers;
    let mut files = Vec::new();
    let mut checks = Vec::new();

    if modes.lens {
        let rows: Vec<LensRow> = read_csv(&run.join(LENS_FILE))?;
        let pooled: Vec<FamilyProbRow> = (0..=n_layers)
            .map(|l| FamilyProbRow {
                model,
                layer: l,
                mean_p_fam: mean(rows.iter().filter(|r| r.layer == l).map(|r| r.p_fam)),
            })
            .collect();
        write_csv(&dir, "fig2_family_probs.csv", &pooled, &mut files)?;

        let mut by_hop: BTreeMap<(usize, usize), Vec<&LensRow>> = BTreeMap::new();
        for r in &rows {
            by_hop.entry((r.hops, r.layer)).or_default().push(r);
        }
        let fam_by_hop: Vec<FamilyProbHopRow> = by_hop
            .iter()
            .map(|(&(hops, layer), rs)| FamilyProbHopRow {
                model,
                hops,
                layer,
                mean_p_fam: mean(rs.iter().map(|r| r.p_fam)),
            })
            .collect();
        write_csv(&dir, "fig2_family_probs_by_hop.csv", &fam_by_hop, &mut files)?;
        let lens_by_hop: Vec<LensHopRow> = by_hop
            .iter()
            .map(|(&(hops, layer), rs)| LensHopRow {
                model,
                hops,
                layer,
                mean_p_fam: mean(rs.iter().map(|r| r.p_fam)),
                accuracy: mean(rs.iter().map(|r| r.is_correct as u8 as f64)),
                constrained_accuracy: mean(rs.iter().map(|r| r.is_constrained_correct as u8 as f64)),
                mean_entropy: mean(rs.iter().map(|r| r.entropy)),
                n: rs.len(),
            })
            .collect();
        write_csv(&dir, "fig3_lens_by_hop.csv", &lens_by_hop, &mut files)?;

        let two_hop: Vec<f64> = (0..=n_layers)
            .map(|l| mean(rows.iter().filter(|r| r.hops == 2 && r.layer == l).map(|r| r.p_fam)))
            .collect();
        let mut dip = if rows.iter().any(|r| r.hops == 2) {
            final_layer_dip(&two_hop)
        } else {
            Check::new("final_layer_dip", CheckStatus::Skip, "no 2-hop stories".into())
        };
        dip.detail = format!("2-hop stories, {}", dip.detail);
        checks.push(dip);
        let mut pooled_dip = final_layer_dip(&pooled.iter().map(|r| r.mean_p_fam).collect::<Vec<_>>());
        pooled_dip.name = "final_layer_dip_pooled".into();
        checks.push(pooled_dip);
    }

    if modes.metrics {
        let rows: Vec<MetricsIn> = read_csv(&run.join(METRICS_FILE))?;
        let mut groups: BTreeMap<(usize, u8, usize), (MetricsMode, Vec<&MetricsIn>)> = BTreeMap::new();
        for r in &rows {
            let key = (r.hops, r.mode as u8, r.layer);
            groups.entry(key).or_insert_with(|| (r.mode, Vec::new())).1.push(r);
        }
        let out: Vec<MetricsOut> = groups
            .iter()
            .map(|(&(hops, _, layer), (mode, rs))| MetricsOut {
                model,
                hops,
                mode: *mode,
                layer,
                mean_ratio: mean(rs.iter().map(|r| r.ratio)),
                mean_cossim: mean(rs.iter().map(|r| r.cossim)),
                n: rs.len(),
            })
            .collect();
        write_csv(&dir, "fig_residual_metrics.csv", &out, &mut files)?;
    }

    if modes.patch {
        let mut recovery_rows = Vec::new();
        for &direction in &cfg.patch.directions {
            for kind in ["by_hops", "by_position"] {
                let name = format!("recovery_{}_{kind}.csv", direction.as_str());
                let rows: Vec<AggregateRow> = read_csv(&run.join(&name))?;
                for r in rows {
                    let group = format!("{}/{}", direction.as_str(), r.group);
                    recovery_rows.push(RecoveryRow {
                        group: group.clone(),
                        layer: r.layer,
                        position: "t_r",
                        mean_rec: r.mean_rec_tr,
                    });
                    recovery_rows.push(RecoveryRow {
                        group,
                        layer: r.layer,
                        position: "T",
                        mean_rec: r.mean_rec_t,
                    });
                }
            }
        }
        write_csv(&dir, "fig4_recovery.csv", &recovery_rows, &mut files)?;

        let grids = read_grids(manifest)?;
        let cells: Vec<GridCell> = grids
            .iter()
            .flat_map(|g| {
                g.grid.iter().enumerate().flat_map(move |(l, row)| {
                    row.iter().enumerate().map(move |(c, &rec)| GridCell {
                        pair_id: &g.pair_id,
                        direction: g.direction,
                        hops: g.hops,
                        replaced_position: g.replaced_position,
                        layer: l,
                        token: g.columns[c],
                        rec,
                    })
                })
            })
            .collect();
        write_csv(&dir, "fig6_grids.csv", &cells, &mut files)?;

        let forward: Vec<AggregateRow> = if cfg.patch.directions.contains(&Direction::Forward) {
            read_csv(&run.join("recovery_forward_by_hops.csv"))?
        } else {
            Vec::new()
        };
        let curves: Vec<(usize, Vec<f64>)> = DROP_HOPS
            .iter()
            .filter_map(|&h| {
                let label = format!("hops={h}");
                let c: Vec<f64> = forward
                    .iter()
                    .filter(|r| r.group == label)
                    .map(|r| r.mean_rec_tr)
                    .collect();
                (!c.is_empty()).then_some((h, c))
            })
            .collect();
        let mut drop = earlier_drop(&curves);
        if curves.len() < DROP_HOPS.len() && drop.status != CheckStatus::Skip {
            drop.status = CheckStatus::Skip;
            drop.detail = format!("needs forward pairs at hops 3, 5 and 7; have {}", drop.detail);
        }
        checks.push(drop);
        let status = if manifest.corner_violations.is_empty() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        checks.push(Check::new(
            "grid_corners",
            status,
            format!(
                "{} of {} grids violate a corner invariant",
                manifest.corner_violations.len(),
                grids.len()
            ),
        ));
        for s in &manifest.shortfall {
            checks.push(Check::new(
                "pair_shortfall",
                CheckStatus::Skip,
                format!("hops={}: {}/{} flipping pairs", s.hops, s.found, s.target),
            ));
        }
    }

    let mut summary = format!(
        "model: {model}\nlayers: {n_layers}\nconfig: {}\n\n",
        manifest.config_hash
    );
    for c in &checks {
        let _ = writeln!(summary, "{}", c.line());
    }
    let path = dir.join("summary.txt");
    fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    files.push(format!("{REPORT_DIR}/summary.txt"));
    Ok(ReportBundle { dir, files, checks })
}

/// All grids listed in the manifest, in manifest order.
pub fn read_grids(manifest: &RunManifest) -> Result<Vec<RecoveryGrid>> {
    let Some(stage) = manifest.stages.get("patch") else {
        return Ok(Vec::new());
    };
    stage
        .outputs
        .keys()
        .filter(|k| k.starts_with(GRID_DIR))
        .map(|k| {
            let path = manifest.run_dir().join(k);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}
