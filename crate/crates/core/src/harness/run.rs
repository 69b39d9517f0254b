// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stage-by-stage experiment execution with a checksummed manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{resolve_asset, ExperimentConfig, ModelSource};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kinship::{generate_dataset, read_jsonl, write_jsonl, GenConfig, Relation, RelationFilter, StoryRecord};
use crate::lens::{attention_to_token, lens_profile, residual_metrics, LensRow, MetricsMode};
use crate::model::{load_model_dir, Capture, Model};
use crate::patching::{
    aggregate_recovery, find_flip_pairs, patch_grid, AggregateRow, CounterfactualPair, GroupBy, MutationMode,
    PreparedPrompt, RecoveryGrid, SearchCounts,
};
use crate::seed;
use crate::tokenizer::Tokenizer;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORIES_FILE: &str = "stories.jsonl";
pub const PATCH_STORIES_FILE: &str = "patch_stories.jsonl";
pub const LENS_FILE: &str = "lens.csv";
pub const METRICS_FILE: &str = "residual_metrics.csv";
pub const ATTENTION_STORIES_FILE: &str = "attention_stories.csv";
pub const ATTENTION_PAIRS_FILE: &str = "attention_pairs.csv";
pub const TRACE_FILE: &str = "traces.bin";
pub const TRACE_INDEX_FILE: &str = "traces_index.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const GRID_DIR: &str = "grids";

const PATCH_STREAM: u64 = 7;
/// Stories per parallel batch in the lens stage; bounds live traces.
const LENS_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    /// The stage aborted; any files it left behind are not to be trusted.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    /// Outputs reused from an earlier run with the same config hash.
    pub cached: bool,
    /// Output path (relative to the run directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub hops: usize,
    pub found: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub model: String,
    pub n_layers: usize,
    pub asset_checksums: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: BTreeMap<String, StageRecord>,
    #[serde(default)]
    pub shortfall: Vec<Shortfall>,
    /// Pair-search statistics per hop count.
    #[serde(default)]
    pub pair_search: BTreeMap<usize, SearchCounts>,
    /// Emitted grids failing a corner invariant.
    #[serde(default)]
    pub corner_violations: Vec<String>,
}

impl RunManifest {
    pub fn run_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn stage_complete(&self, name: &str) -> bool {
        self.stages.get(name).is_some_and(|s| s.status == StageStatus::Complete)
    }

    pub fn read(run_dir: &Path) -> Result<RunManifest> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut m: RunManifest = serde_json::from_str(&text)?;
        // the run may have been moved since it was written
        m.config.out_dir = run_dir.to_path_buf();
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        let path = self.run_dir().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

/// Model and tokenizer, with checksums of the files they came from.
pub struct Assets {
    pub model: Model,
    pub tokenizer: Tokenizer,
    pub checksums: BTreeMap<String, String>,
}

fn tokenizer_dir(config: &ExperimentConfig, model_dir: Option<&Path>) -> Result<PathBuf> {
    if let Some(dir) = &config.tokenizer {
        return resolve_asset(dir);
    }
    if let Some(dir) = model_dir.filter(|d| d.join("vocab.json").exists()) {
        return Ok(dir.to_path_buf());
    }
    resolve_asset(Path::new("gpt2"))
}

pub fn load_assets(config: &ExperimentConfig, exec: Exec) -> Result<Assets> {
    let mut checksums = BTreeMap::new();
    let (model, model_dir) = match &config.model {
        ModelSource::Dir(dir) => {
            let dir = resolve_asset(dir)?;
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "safetensors" || x == "json"))
                .collect();
            files.sort();
            for f in files {
                let name = f.file_name().unwrap_or_default().to_string_lossy();
                checksums.insert(format!("model/{name}"), sha256_file(&f)?);
            }
            (load_model_dir(&dir)?, Some(dir))
        }
        ModelSource::Toy(toy) => {
            let canonical = serde_json::to_vec(toy)?;
            checksums.insert("model/toy".into(), hex::encode(Sha256::digest(canonical)));
            (toy.build()?, None)
        }
    };
    let tok_dir = tokenizer_dir(config, model_dir.as_deref())?;
    for name in ["vocab.json", "merges.txt"] {
        checksums.insert(format!("tokenizer/{name}"), sha256_file(&tok_dir.join(name))?);
    }
    if let Some(data) = &config.data {
        checksums.insert("data".into(), sha256_file(data)?);
    }
    let tokenizer = Tokenizer::from_dir(&tok_dir)?;
    if tokenizer.vocab_size() > model.vocab_size() {
        return Err(Error::Config(format!(
            "tokenizer has {} tokens but the model only {}",
            tokenizer.vocab_size(),
            model.vocab_size()
        )));
    }
    Ok(Assets {
        model: model.with_exec(exec),
        tokenizer,
        checksums,
    })
}

/// Token ids of the answer set, in [`Relation::ANSWERS`] order.
pub fn family_ids(tok: &Tokenizer) -> Result<Vec<u32>> {
    Relation::ANSWERS
        .iter()
        .map(|r| {
            tok.single_token_id(r.word())?
                .ok_or_else(|| Error::Precondition(format!("answer `{r}` is not a single token")))
        })
        .collect()
}

struct Stage<'a> {
    dir: &'a Path,
    outputs: BTreeMap<String, String>,
}

impl<'a> Stage<'a> {
    fn new(dir: &'a Path) -> Self {
        Stage {
            dir,
            outputs: BTreeMap::new(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn record(&mut self, rel: &str) -> Result<()> {
        let sum = sha256_file(&self.path(rel))?;
        self.outputs.insert(rel.to_string(), sum);
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<()> {
        let path = self.path(rel);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        drop(w);
        self.record(rel)
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, serde_json::to_vec(value)?).map_err(|e| Error::io(&path, e))?;
        self.record(rel)
    }

    fn jsonl<T: Serialize>(&mut self, rel: &str, items: &[T]) -> Result<()> {
        let path = self.path(rel);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for item in items {
            serde_json::to_writer(&mut w, item)?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        drop(w);
        self.record(rel)
    }
}

/// Whether an earlier stage can be reused: same config, complete, and
/// every output still matches its checksum.
fn reusable(previous: Option<&RunManifest>, name: &str, dir: &Path) -> Option<StageRecord> {
    let stage = previous?.stages.get(name)?;
    if stage.status != StageStatus::Complete {
        return None;
    }
    for (rel, sum) in &stage.outputs {
        if sha256_file(&dir.join(rel)).ok().as_ref() != Some(sum) {
            return None;
        }
    }
    Some(StageRecord {
        cached: true,
        ..stage.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub story_id: String,
    pub hops: usize,
    pub mode: MetricsMode,
    pub layer: usize,
    pub ratio: f64,
    pub cossim: f64,
}

/// Head-averaged attention of the final token onto one relation token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryAttentionRow {
    pub story_id: String,
    pub hops: usize,
    pub fact: usize,
    pub key: usize,
    pub layer: usize,
    pub attention: f64,
}

/// Head-averaged attention of queries `q >= t_r` onto `t_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAttentionRow {
    pub pair_id: String,
    pub hops: usize,
    pub relation: Relation,
    pub run: String,
    pub layer: usize,
    pub query: usize,
    pub attention: f64,
}

/// One entry of the trace cache index. States are stored as
/// little-endian f32, layer-major, one row per listed token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIndexEntry {
    pub story_id: String,
    pub offset_bytes: u64,
    pub layers: usize,
    pub d_model: usize,
    /// Final token first, then each relation token in fact order.
    pub tokens: Vec<usize>,
}

struct StoryOutputs {
    lens: Vec<LensRow>,
    metrics: Vec<MetricsRow>,
    attention: Vec<StoryAttentionRow>,
    tokens: Vec<usize>,
    states: Vec<f32>,
}

fn analyse_story(
    config: &ExperimentConfig,
    assets: &Assets,
    fam_ids: &[u32],
    record: &StoryRecord,
) -> Result<StoryOutputs> {
    let (model, tok) = (&assets.model, &assets.tokenizer);
    let story = record.story()?;
    let prompt = PreparedPrompt::new(tok, record, &story)?;
    let modes = config.modes;
    let story_attention = modes.attention && !modes.patch;
    let capture = Capture {
        attention: story_attention,
        deltas: modes.metrics,
    };
    let trace = model.forward(&prompt.ids, capture)?;
    let mut out = StoryOutputs {
        lens: Vec::new(),
        metrics: Vec::new(),
        attention: Vec::new(),
        tokens: Vec::new(),
        states: Vec::new(),
    };
    if modes.lens {
        let gold = story
            .gold
            .ok_or_else(|| Error::Precondition(format!("story {} has no gold answer", record.id)))?;
        let gold_id = fam_ids[Relation::ANSWERS
            .iter()
            .position(|&r| r == gold)
            .expect("gold answers lie in the answer set")];
        out.lens = lens_profile(model, &trace, gold_id, fam_ids)?.rows(&record.id, record.hops);
    }
    if modes.metrics {
        for mode in [MetricsMode::FinalToken, MetricsMode::AllTokensMean] {
            for m in residual_metrics(&trace, mode).layers {
                out.metrics.push(MetricsRow {
                    story_id: record.id.clone(),
                    hops: record.hops,
                    mode,
                    layer: m.layer,
                    ratio: m.ratio,
                    cossim: m.cossim,
                });
            }
        }
    }
    if story_attention {
        for (fact, &key) in prompt.relation_tokens.iter().enumerate() {
            let prof = attention_to_token(&trace, key)?;
            for (l, row) in prof.values.iter().enumerate() {
                out.attention.push(StoryAttentionRow {
                    story_id: record.id.clone(),
                    hops: record.hops,
                    fact,
                    key,
                    layer: l + 1,
                    attention: *row.last().expect("final query present"),
                });
            }
        }
    }
    out.tokens = std::iter::once(prompt.last())
        .chain(prompt.relation_tokens.iter().copied())
        .collect();
    for l in 0..=trace.n_layers {
        for &t in &out.tokens {
            out.states.extend_from_slice(trace.hidden(l, t));
        }
    }
    Ok(out)
}

fn run_stage<F>(manifest: &mut RunManifest, previous: Option<&RunManifest>, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut Stage<'_>, &mut RunManifest) -> Result<()>,
{
    let dir = manifest.run_dir().to_path_buf();
    if let Some(rec) = reusable(previous, name, &dir) {
        log::info!("stage {name}: reusing cached outputs");
        if let Some(prev) = previous {
            // carry over bookkeeping produced by cached stages
            if name == "pairs" {
                manifest.shortfall = prev.shortfall.clone();
                manifest.pair_search = prev.pair_search.clone();
            }
            if name == "patch" {
                manifest.corner_violations = prev.corner_violations.clone();
            }
        }
        manifest.stages.insert(name.to_string(), rec);
        return Ok(());
    }
    log::info!("stage {name}: running");
    let mut stage = Stage::new(&dir);
    match body(&mut stage, manifest) {
        Ok(()) => {
            manifest.stages.insert(
                name.to_string(),
                StageRecord {
                    status: StageStatus::Complete,
                    cached: false,
                    outputs: stage.outputs,
                    error: None,
                },
            );
            manifest.write()
        }
        Err(e) => {
            manifest.stages.insert(
                name.to_string(),
                StageRecord {
                    status: StageStatus::Failed,
                    cached: false,
                    outputs: BTreeMap::new(),
                    error: Some(e.to_string()),
                },
            );
            manifest.finished_unix = now();
            manifest.write()?;
            Err(Error::Stage {
                stage: name.to_string(),
                source: Box::new(e),
            })
        }
    }
}

fn load_stories(dir: &Path, manifest: &RunManifest, stage: &str, file: &str) -> Result<Vec<StoryRecord>> {
    if !manifest.stages[stage].outputs.contains_key(file) {
        return Ok(Vec::new());
    }
    read_jsonl(&dir.join(file))
}

/// Runs every requested stage, reusing outputs of an earlier run in the
/// same directory when its config hash matches.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    run_experiment_with(config, Exec::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, exec: Exec) -> Result<RunManifest> {
    config.validate()?;
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let hash = config.hash();
    let previous = RunManifest::read(&dir).ok();

    let assets = load_assets(config, exec).map_err(|e| Error::Stage {
        stage: "load".into(),
        source: Box::new(e),
    })?;
    let fam_ids = family_ids(&assets.tokenizer).map_err(|e| Error::Stage {
        stage: "load".into(),
        source: Box::new(e),
    })?;
    let previous = previous.filter(|m| m.config_hash == hash && m.asset_checksums == assets.checksums);
    let mut manifest = RunManifest {
        config_hash: hash,
        config: config.clone(),
        model: config.model_label(),
        n_layers: assets.model.n_layers(),
        asset_checksums: assets.checksums.clone(),
        started_unix: now(),
        finished_unix: 0,
        stages: BTreeMap::new(),
        shortfall: Vec::new(),
        pair_search: BTreeMap::new(),
        corner_violations: Vec::new(),
    };
    let prev = previous.as_ref();
    let modes = config.modes;

    run_stage(&mut manifest, prev, "generate", |stage, _| {
        if let Some(data) = &config.data {
            let stories = read_jsonl(data)?;
            if stories.is_empty() {
                return Err(Error::Precondition(format!("{} holds no stories", data.display())));
            }
            for file in [STORIES_FILE, PATCH_STORIES_FILE] {
                write_jsonl(&stage.path(file), &stories)?;
                stage.record(file)?;
            }
            return Ok(());
        }
        if modes.lens || modes.metrics || (modes.attention && !modes.patch) {
            let cfg = GenConfig {
                hops: config.hops.clone(),
                per_hop: config.per_hop,
                max_siblings: config.max_siblings,
                seed: config.seed,
                filter: RelationFilter::All,
            };
            let stories = generate_dataset(&cfg, exec)?;
            write_jsonl(&stage.path(STORIES_FILE), &stories)?;
            stage.record(STORIES_FILE)?;
        }
        if modes.patch {
            let (filter, seed) = match config.patch.mode {
                MutationMode::SiblingsOnly => {
                    (RelationFilter::SiblingsOnly, seed::derive(config.seed, &[PATCH_STREAM]))
                }
                MutationMode::AllRelations => (RelationFilter::All, config.seed),
            };
            let cfg = GenConfig {
                hops: config.patch_hops(),
                per_hop: config.per_hop,
                max_siblings: config.max_siblings,
                seed,
                filter,
            };
            let stories = generate_dataset(&cfg, exec)?;
            write_jsonl(&stage.path(PATCH_STORIES_FILE), &stories)?;
            stage.record(PATCH_STORIES_FILE)?;
        }
        Ok(())
    })?;

    if modes.lens || modes.metrics || (modes.attention && !modes.patch) {
        run_stage(&mut manifest, prev, "lens", |stage, m| {
            let stories = load_stories(&dir, m, "generate", STORIES_FILE)?;
            let mut lens = Vec::new();
            let mut metrics = Vec::new();
            let mut attention = Vec::new();
            let mut index = Vec::new();
            let trace_path = stage.path(TRACE_FILE);
            let file = File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
            let mut traces = BufWriter::new(file);
            let mut offset = 0u64;
            for batch in stories.chunks(LENS_BATCH) {
                let results = exec.map(batch, |r| analyse_story(config, &assets, &fam_ids, r));
                for (record, result) in batch.iter().zip(results) {
                    let out = result?;
                    lens.extend(out.lens);
                    metrics.extend(out.metrics);
                    attention.extend(out.attention);
                    for v in &out.states {
                        traces
                            .write_all(&v.to_le_bytes())
                            .map_err(|e| Error::io(&trace_path, e))?;
                    }
                    index.push(TraceIndexEntry {
                        story_id: record.id.clone(),
                        offset_bytes: offset,
                        layers: m.n_layers + 1,
                        d_model: assets.model.d_model(),
                        tokens: out.tokens,
                    });
                    offset += 4 * out.states.len() as u64;
                }
            }
            traces.flush().map_err(|e| Error::io(&trace_path, e))?;
            drop(traces);
            stage.record(TRACE_FILE)?;
            stage.jsonl(TRACE_INDEX_FILE, &index)?;
            if modes.lens {
                stage.csv(LENS_FILE, &lens)?;
            }
            if modes.metrics {
                stage.csv(METRICS_FILE, &metrics)?;
            }
            if modes.attention && !modes.patch {
                stage.csv(ATTENTION_STORIES_FILE, &attention)?;
            }
            Ok(())
        })?;
    }

    if modes.patch {
        run_stage(&mut manifest, prev, "pairs", |stage, m| {
            let stories = load_stories(&dir, m, "generate", PATCH_STORIES_FILE)?;
            let mut pairs = Vec::new();
            let mut hop_counts: Vec<usize> = stories.iter().map(|s| s.hops).collect();
            hop_counts.sort_unstable();
            hop_counts.dedup();
            if let Some(wanted) = &config.patch.hops {
                hop_counts.retain(|h| wanted.contains(h));
            }
            for hops in hop_counts {
                let base: Vec<StoryRecord> = stories.iter().filter(|s| s.hops == hops).cloned().collect();
                let search = find_flip_pairs(
                    &assets.model,
                    &assets.tokenizer,
                    &base,
                    config.patch.mode,
                    config.patch.n_target,
                    exec,
                )?;
                if let Some((found, target)) = search.shortfall() {
                    m.shortfall.push(Shortfall { hops, found, target });
                }
                m.pair_search.insert(hops, search.counts);
                pairs.extend(search.pairs);
            }
            stage.jsonl(PAIRS_FILE, &pairs)
        })?;

        run_stage(&mut manifest, prev, "patch", |stage, m| {
            let pairs: Vec<CounterfactualPair> = read_pairs(&dir.join(PAIRS_FILE))?;
            let mut grids: Vec<RecoveryGrid> = Vec::new();
            m.corner_violations.clear();
            for pair in &pairs {
                for &direction in &config.patch.directions {
                    let grid = patch_grid(&assets.model, pair, config.patch.cells, direction)?;
                    if let Err(msg) = grid.check_corners(1e-3) {
                        log::warn!("{msg}");
                        m.corner_violations.push(msg);
                    }
                    stage.json(&format!("{GRID_DIR}/{}.{}.json", pair.id, direction.as_str()), &grid)?;
                    grids.push(grid);
                }
            }
            let above: usize = grids
                .iter()
                .map(|g| g.grid.iter().flatten().filter(|&&v| v > 1.0).count())
                .sum();
            let total: usize = grids.iter().map(|g| g.grid.iter().map(Vec::len).sum::<usize>()).sum();
            log::info!("{above} of {total} recovery cells exceed 1");
            for &direction in &config.patch.directions {
                let mine: Vec<RecoveryGrid> = grids.iter().filter(|g| g.direction == direction).cloned().collect();
                let by_hops = aggregate_recovery(&mine, GroupBy::Hops)?;
                stage.csv(&format!("recovery_{}_by_hops.csv", direction.as_str()), &by_hops)?;
                let by_position = aggregate_by_position(&mine)?;
                stage.csv(
                    &format!("recovery_{}_by_position.csv", direction.as_str()),
                    &by_position,
                )?;
            }
            if modes.attention {
                let rows = pair_attention(&assets.model, &pairs)?;
                stage.csv(ATTENTION_PAIRS_FILE, &rows)?;
            }
            Ok(())
        })?;
    }

    manifest.finished_unix = now();
    manifest.write()?;
    Ok(manifest)
}

/// Per-position aggregates within each hop count.
fn aggregate_by_position(grids: &[RecoveryGrid]) -> Result<Vec<AggregateRow>> {
    let mut by_hops: BTreeMap<usize, Vec<RecoveryGrid>> = BTreeMap::new();
    for g in grids {
        by_hops.entry(g.hops).or_default().push(g.clone());
    }
    let mut rows = Vec::new();
    for (hops, members) in by_hops {
        for mut row in aggregate_recovery(&members, GroupBy::ReplacedPosition)? {
            row.group = format!("hops={hops}/{}", row.group);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn read_pairs(path: &Path) -> Result<Vec<CounterfactualPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn pair_attention(model: &Model, pairs: &[CounterfactualPair]) -> Result<Vec<PairAttentionRow>> {
    let mut rows = Vec::new();
    for pair in pairs {
        for (run, ids, relation) in [("a", &pair.ids_a, pair.from), ("b", &pair.ids_b, pair.to)] {
            let trace = model.forward(
                ids,
                Capture {
                    attention: true,
                    deltas: false,
                },
            )?;
            let prof = attention_to_token(&trace, pair.t_r)?;
            for (l, values) in prof.values.iter().enumerate() {
                for (k, &v) in values.iter().enumerate() {
                    rows.push(PairAttentionRow {
                        pair_id: pair.id.clone(),
                        hops: pair.hops,
                        relation,
                        run: run.to_string(),
                        layer: l + 1,
                        query: pair.t_r + k,
                        attention: v,
                    });
                }
            }
        }
    }
    Ok(rows)
}
