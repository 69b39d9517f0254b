// SPDX-License-Identifier: MIT OR Apache-2.0

//! Locating pretrained checkpoints for the acceptance suite.
//!
//! A checkpoint counts as present when `$DEPTHLENS_ASSETS/<name>` holds a
//! `config.json` and at least one `*.safetensors` file.

use std::path::{Path, PathBuf};

use depthlens::harness::ASSETS_ENV;
use depthlens::model::{load_model_dir, Model};
use depthlens::tokenizer::Tokenizer;

/// Checked in order for the largest-model criteria.
pub const LARGE_CANDIDATES: [&str; 4] = ["gpt2-large", "gpt2-xl", "gpt2-medium", "gpt2"];

/// The GPT-2 vocabulary shipped with the repository.
pub fn vendored_tokenizer() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/gpt2")
}

pub fn pretrained(name: &str) -> Option<PathBuf> {
    let dir = Path::new(&std::env::var_os(ASSETS_ENV)?).join(name);
    let has_weights = std::fs::read_dir(&dir)
        .ok()?
        .flatten()
        .any(|e| e.path().extension().is_some_and(|x| x == "safetensors"));
    (dir.join("config.json").is_file() && has_weights).then_some(dir)
}

/// First present checkpoint among [`LARGE_CANDIDATES`].
pub fn largest_pretrained() -> Option<(&'static str, PathBuf)> {
    LARGE_CANDIDATES.iter().find_map(|n| pretrained(n).map(|d| (*n, d)))
}

pub fn missing(name: &str) -> String {
    format!("pretrained `{name}` weights not found (needs ${ASSETS_ENV}/{name} with config.json and *.safetensors)")
}

/// The checkpoint's own tokenizer files, else the vendored GPT-2 ones.
pub fn tokenizer_dir(model_dir: &Path) -> PathBuf {
    if model_dir.join("vocab.json").is_file() {
        model_dir.to_path_buf()
    } else {
        vendored_tokenizer()
    }
}

pub fn load_pretrained(dir: &Path) -> Result<(Model, Tokenizer), String> {
    let model = load_model_dir(dir).map_err(|e| e.to_string())?;
    let tok = Tokenizer::from_dir(&tokenizer_dir(dir)).map_err(|e| e.to_string())?;
    Ok((model, tok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vendored_tokenizer_is_present() {
        assert!(vendored_tokenizer().join("vocab.json").is_file());
        assert!(vendored_tokenizer().join("merges.txt").is_file());
    }

    #[test]
    fn directories_without_weights_do_not_count() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("gpt2");
        std::fs::create_dir(&dir).unwrap();
        std::fs::write(dir.join("config.json"), "{}").unwrap();
        std::env::set_var(ASSETS_ENV, root.path());
        assert_eq!(pretrained("gpt2"), None);
        std::fs::write(dir.join("model.safetensors"), b"").unwrap();
        assert_eq!(pretrained("gpt2"), Some(dir.clone()));
        assert_eq!(largest_pretrained(), Some(("gpt2", dir)));
        assert_eq!(tokenizer_dir(&root.path().join("gpt2")), vendored_tokenizer());
    }
}
