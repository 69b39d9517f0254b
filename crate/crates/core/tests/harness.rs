// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::path::Path;

use common::setup::{assets_dir, GPT2_VOCAB};
use depthlens::harness::{
    emit_report, run_experiment, run_experiment_with, CheckStatus, ExperimentConfig, ModelSource, Modes, PatchConfig,
    RunManifest, StageStatus, LENS_FILE, MANIFEST_FILE,
};
use depthlens::model::ToyConfig;
use depthlens::patching::{Cells, MutationMode};
use depthlens::{Error, Exec};

fn toy() -> ToyConfig {
    ToyConfig {
        init_std: 1.0,
        ..ToyConfig::gpt2(2, 32, GPT2_VOCAB, 17)
    }
}

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSource::Toy(toy()),
        tokenizer: Some(assets_dir()),
        hops: vec![2, 3],
        per_hop: 5,
        seed: 3,
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("report")] {
        let Ok(entries) = std::fs::read_dir(&sub) else { continue };
        let mut names: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for p in names.into_iter().filter(|p| p.extension().is_some_and(|x| x == "csv")) {
            out.push((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            ));
        }
    }
    out
}

#[test]
fn lens_run_has_one_row_per_story_and_layer() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join(LENS_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "story_id,hops,layer,p_fam,is_correct,is_constrained_correct,entropy,top_token"
    );
    assert_eq!(lines.count(), 2 * 5 * (m.n_layers + 1));
    assert!(m.stage_complete("generate") && m.stage_complete("lens"));

    let report = emit_report(&m).unwrap();
    let fig2 = std::fs::read_to_string(report.dir.join("fig2_family_probs.csv")).unwrap();
    assert_eq!(fig2.lines().next().unwrap(), "model,layer,mean_p_fam");
    assert_eq!(fig2.lines().count(), 1 + m.n_layers + 1);
    assert!(report.checks.iter().any(|c| c.name == "final_layer_dip"));
    assert!(report.dir.join("summary.txt").exists());
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg_a = config(a.path());
    cfg_a.modes = Modes {
        lens: true,
        patch: true,
        metrics: true,
        attention: true,
    };
    cfg_a.patch = PatchConfig {
        mode: MutationMode::AllRelations,
        n_target: 3,
        ..PatchConfig::default()
    };
    let cfg_b = ExperimentConfig {
        out_dir: b.path().to_path_buf(),
        ..cfg_a.clone()
    };
    let ma = run_experiment_with(&cfg_a, Exec::Parallel).unwrap();
    let mb = run_experiment_with(&cfg_b, Exec::Sequential).unwrap();
    emit_report(&ma).unwrap();
    emit_report(&mb).unwrap();
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert!(fa.len() >= 10, "{:?}", fa.iter().map(|f| &f.0).collect::<Vec<_>>());
    assert_eq!(fa, fb);
    for name in ["lens", "pairs", "patch"] {
        assert_eq!(ma.stages[name].outputs, mb.stages[name].outputs, "{name}");
    }
}

#[test]
fn unchanged_config_reuses_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let first = run_experiment(&cfg).unwrap();
    assert!(!first.stages["lens"].cached);
    let second = run_experiment(&cfg).unwrap();
    assert!(second.stages.values().all(|s| s.cached));
    assert_eq!(first.stages["lens"].outputs, second.stages["lens"].outputs);

    // a tampered output is regenerated
    std::fs::write(dir.path().join(LENS_FILE), "junk").unwrap();
    let third = run_experiment(&cfg).unwrap();
    assert!(!third.stages["lens"].cached && third.stages["generate"].cached);

    let changed = run_experiment(&ExperimentConfig { seed: 4, ..cfg }).unwrap();
    assert!(changed.stages.values().all(|s| !s.cached));
    assert_ne!(changed.config_hash, first.config_hash);
}

#[test]
fn pair_shortfall_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        hops: vec![3],
        per_hop: 2,
        modes: Modes {
            lens: false,
            patch: true,
            ..Modes::default()
        },
        patch: PatchConfig {
            mode: MutationMode::SiblingsOnly,
            n_target: 30,
            cells: Cells::Full,
            ..PatchConfig::default()
        },
        ..config(dir.path())
    };
    let m = run_experiment(&cfg).unwrap();
    assert_eq!(m.shortfall.len(), 1);
    let s = &m.shortfall[0];
    assert_eq!((s.hops, s.target), (3, 30));
    assert!(s.found < 30);
    assert!(m.corner_violations.is_empty(), "{:?}", m.corner_violations);
    let report = emit_report(&m).unwrap();
    let fig4 = std::fs::read_to_string(report.dir.join("fig4_recovery.csv")).unwrap();
    assert_eq!(fig4.lines().next().unwrap(), "group,layer,position,mean_rec");
    let summary = std::fs::read_to_string(report.dir.join("summary.txt")).unwrap();
    assert!(summary.contains(&format!("{}/30", s.found)));
    assert!(report
        .checks
        .iter()
        .any(|c| c.name == "earlier_tr_drop_with_hops" && c.status == CheckStatus::Skip));
}

#[test]
fn failures_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.model = ModelSource::Toy(ToyConfig {
        max_positions: 16,
        ..toy()
    });
    match run_experiment(&cfg) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "lens");
            assert!(matches!(*source, Error::Length { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
    let m = RunManifest::read(dir.path()).unwrap();
    assert_eq!(m.stages["lens"].status, StageStatus::Failed);
    assert!(m.stages["lens"].outputs.is_empty());
    match emit_report(&m) {
        Err(Error::Report(msg)) => assert!(msg.contains("lens")),
        other => panic!("unexpected {other:?}"),
    }

    let missing = ExperimentConfig {
        model: ModelSource::Dir("no-such-model".into()),
        ..config(dir.path())
    };
    assert!(matches!(run_experiment(&missing), Err(Error::Stage { stage, .. }) if stage == "load"));
    assert!(dir.path().join(MANIFEST_FILE).exists());
}

#[test]
fn long_stories_need_more_siblings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        hops: vec![11],
        ..config(dir.path())
    };
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}
