// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment orchestration: configuration, staged runs with a
//! checksummed manifest, and report emission.
//!
//! Every artifact is a flat file under the run directory. Stories are
//! processed in parallel but merged in story order, so output bytes do
//! not depend on the execution strategy.

mod config;
mod reference;
mod report;
mod run;

pub use config::{
    resolve_asset, ExperimentConfig, ModelSource, Modes, PatchConfig, ASSETS_ENV, LONG_STORY_MIN_SIBLINGS,
};
pub use reference::{
    crosscheck, primary_outputs, Crosscheck, PrimaryOutput, PromptDiff, ReferenceBundle, LOGIT_TOLERANCE,
};
pub use report::{
    earlier_drop, emit_report, final_layer_dip, read_grids, Check, CheckStatus, ReportBundle, DROP_HOPS,
    DROP_THRESHOLD, REPORT_DIR,
};
pub use run::{
    family_ids, load_assets, read_pairs, run_experiment, run_experiment_with, sha256_file, Assets, MetricsRow,
    PairAttentionRow, RunManifest, Shortfall, StageRecord, StageStatus, StoryAttentionRow, TraceIndexEntry,
    ATTENTION_PAIRS_FILE, ATTENTION_STORIES_FILE, GRID_DIR, LENS_FILE, MANIFEST_FILE, METRICS_FILE, PAIRS_FILE,
    PATCH_STORIES_FILE, STORIES_FILE, TRACE_FILE, TRACE_INDEX_FILE,
};
