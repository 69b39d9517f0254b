// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sequential against data-parallel execution for the forward pass, the
//! lens stage and a column-mode patch grid.

use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use depthlens::kinship::{generate_dataset, GenConfig, RelationFilter};
use depthlens::lens::lens_profile;
use depthlens::model::{Capture, Model, ToyConfig};
use depthlens::patching::{find_flip_pairs, patch_grid, Cells, Direction, MutationMode};
use depthlens::tokenizer::Tokenizer;
use depthlens::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn setup() -> (Model, Tokenizer) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/gpt2");
    let tok = Tokenizer::from_dir(&dir).unwrap();
    let model = ToyConfig {
        init_std: 1.0,
        ..ToyConfig::gpt2(6, 128, tok.vocab_size(), 1)
    }
    .build()
    .unwrap();
    (model, tok)
}

fn benches(c: &mut Criterion) {
    let (model, tok) = setup();
    let stories = generate_dataset(
        &GenConfig {
            hops: vec![4],
            per_hop: 16,
            max_siblings: 4,
            seed: 0,
            filter: RelationFilter::All,
        },
        Exec::Sequential,
    )
    .unwrap();
    let ids = tok.encode(&stories[0].text);
    let fam: Vec<u32> = ["son", "daughter", "brother", "sister", "father", "mother"]
        .iter()
        .map(|w| tok.single_token_id(w).unwrap().unwrap())
        .collect();

    let mut group = c.benchmark_group("forward");
    for (name, exec) in MODES {
        let m = model.clone().with_exec(exec);
        group.bench_with_input(BenchmarkId::from_parameter(name), &ids, |b, ids| {
            b.iter(|| m.forward(ids, Capture::NONE).unwrap())
        });
    }
    group.finish();

    // one story per task, kernels sequential inside, as in the lens stage
    let inner = model.clone().with_exec(Exec::Sequential);
    let mut group = c.benchmark_group("lens_stories");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                exec.map(&stories, |s| {
                    let trace = inner.forward(&tok.encode(&s.text), Capture::NONE).unwrap();
                    lens_profile(&inner, &trace, fam[0], &fam).unwrap()
                })
            })
        });
    }
    group.finish();

    let pair = find_flip_pairs(&model, &tok, &stories, MutationMode::AllRelations, 1, Exec::Parallel)
        .unwrap()
        .pairs
        .pop()
        .expect("a flipping pair");
    let mut group = c.benchmark_group("patch_grid_columns");
    group.sample_size(10);
    for (name, exec) in MODES {
        let m = model.clone().with_exec(exec);
        group.bench_function(name, |b| {
            b.iter(|| patch_grid(&m, &pair, Cells::Columns, Direction::Forward).unwrap())
        });
    }
    group.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
