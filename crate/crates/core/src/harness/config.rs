// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kinship::{MAX_HOPS, MIN_HOPS};
use crate::model::ToyConfig;
use crate::patching::{Cells, Direction, MutationMode};

/// Environment variable naming the asset root directory.
pub const ASSETS_ENV: &str = "DEPTHLENS_ASSETS";

/// Smallest sibling cap that makes 11+ hop stories reliably available.
pub const LONG_STORY_MIN_SIBLINGS: usize = 6;

/// Which analyses a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Modes {
    pub lens: bool,
    pub patch: bool,
    pub metrics: bool,
    pub attention: bool,
}

impl Default for Modes {
    fn default() -> Self {
        Modes {
            lens: true,
            patch: false,
            metrics: false,
            attention: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    pub mode: MutationMode,
    pub n_target: usize,
    pub cells: Cells,
    /// Hop counts for patching; the run's hop list when absent.
    pub hops: Option<Vec<usize>>,
    pub directions: Vec<Direction>,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            mode: MutationMode::SiblingsOnly,
            n_target: 30,
            cells: Cells::Columns,
            hops: None,
            directions: Direction::BOTH.to_vec(),
        }
    }
}

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// A directory with `config.json`, `*.safetensors` and optionally
    /// `layout.json`, `vocab.json` and `merges.txt`. Relative paths are
    /// also tried under the asset root.
    Dir(PathBuf),
    /// A random model built in memory.
    Toy(ToyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// Label used in reports; defaults to the model directory name.
    pub model_name: Option<String>,
    /// Directory with `vocab.json` and `merges.txt`; defaults to the
    /// model directory, then `gpt2` under the asset root.
    pub tokenizer: Option<PathBuf>,
    /// Existing story file (JSONL) used instead of generating stories.
    /// Hop counts then come from the file.
    pub data: Option<PathBuf>,
    pub hops: Vec<usize>,
    pub per_hop: usize,
    pub max_siblings: usize,
    pub seed: u64,
    pub modes: Modes,
    pub patch: PatchConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSource::Dir(PathBuf::from("gpt2")),
            model_name: None,
            tokenizer: None,
            data: None,
            hops: (2..=10).collect(),
            per_hop: 100,
            max_siblings: 4,
            seed: 0,
            modes: Modes::default(),
            patch: PatchConfig::default(),
            out_dir: PathBuf::from("run"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops.is_empty() {
            return Err(Error::Config("no hop counts given".into()));
        }
        let patch_hops = self.patch.hops.as_deref().unwrap_or(&[]);
        for &h in self.hops.iter().chain(patch_hops) {
            if !(MIN_HOPS..=MAX_HOPS).contains(&h) {
                return Err(Error::Config(format!("hop count {h} outside {MIN_HOPS}..={MAX_HOPS}")));
            }
            if h > 10 && self.max_siblings < LONG_STORY_MIN_SIBLINGS {
                return Err(Error::Config(format!(
                    "{h}-hop stories need max_siblings >= {LONG_STORY_MIN_SIBLINGS}, got {}",
                    self.max_siblings
                )));
            }
        }
        if self.per_hop == 0 {
            return Err(Error::Config("per_hop must be positive".into()));
        }
        let m = self.modes;
        if !(m.lens || m.patch || m.metrics || m.attention) {
            return Err(Error::Config("no analysis selected".into()));
        }
        if m.patch && self.patch.directions.is_empty() {
            return Err(Error::Config("patching needs at least one direction".into()));
        }
        Ok(())
    }

    /// Hop counts used for patching.
    pub fn patch_hops(&self) -> Vec<usize> {
        self.patch.hops.clone().unwrap_or_else(|| self.hops.clone())
    }

    /// SHA-256 over the canonical JSON form; any field change alters it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn model_label(&self) -> String {
        if let Some(name) = &self.model_name {
            return name.clone();
        }
        match &self.model {
            ModelSource::Dir(p) => p
                .file_name()
                .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()),
            ModelSource::Toy(_) => "toy".into(),
        }
    }
}

/// Finds `path` as given, then under the asset root.
pub fn resolve_asset(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(root) = std::env::var_os(ASSETS_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    Err(Error::Config(format!(
        "asset {} not found (set {ASSETS_ENV} to the asset root)",
        path.display()
    )))
}
