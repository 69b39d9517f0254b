// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::setup::{gpt2_tokenizer, toy_gpt2};
use depthlens::kinship::Relation;
use depthlens::lens::argmax;
use depthlens::lens::{
    attention_to_token, lens_distribution, lens_profile, residual_metrics, softmax, write_lens_csv, MetricsMode,
};
use depthlens::model::ops::dot;
use depthlens::model::{Capture, Model, ToyConfig, WeightLayout};
use depthlens::Error;

fn fam_ids() -> Vec<u32> {
    Relation::ANSWERS
        .iter()
        .map(|r| gpt2_tokenizer().single_token_id(r.word()).unwrap().unwrap())
        .collect()
}

#[test]
fn final_layer_lens_is_the_model_output() {
    let model = toy_gpt2(3, 21);
    let ids = gpt2_tokenizer().encode("Person2 is Person1's sister.\nTherefore, Person2 is Person1's");
    let tr = model.forward(&ids, Capture::NONE).unwrap();
    let want = softmax(&tr.final_logits);
    for l in 0..=tr.n_layers {
        let p = lens_distribution(&model, &tr, l).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&x| x >= 0.0));
        if l == tr.n_layers {
            let err = p.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-6);
        }
    }
    assert!(matches!(lens_distribution(&model, &tr, 4), Err(Error::Index { .. })));
}

#[test]
fn profile_bounds_and_implication() {
    let model = toy_gpt2(3, 22);
    let fam = fam_ids();
    let ids = gpt2_tokenizer().encode("Person1 has a brother called Person3.\nTherefore, Person3 is Person1's");
    let tr = model.forward(&ids, Capture::NONE).unwrap();
    let gold = fam[8];
    let prof = lens_profile(&model, &tr, gold, &fam).unwrap();
    assert_eq!(prof.layers.len(), 4);
    let ln_v = (common::setup::GPT2_VOCAB as f64).ln();
    for m in &prof.layers {
        assert!((0.0..=1.0).contains(&m.p_fam));
        assert!(m.entropy >= 0.0 && m.entropy <= ln_v + 1e-9);
        assert!(m.p_fam >= m.p_gold);
        if m.is_correct {
            assert!(m.is_constrained_correct && fam.contains(&m.top_token));
        }
    }
    assert!(lens_profile(&model, &tr, 0, &fam).is_err());
    let rows = prof.rows("h02-0000", 2);
    let mut buf = Vec::new();
    write_lens_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("story_id,hops,layer,p_fam,is_correct,is_constrained_correct,entropy,top_token\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn readout_of_zero_is_unembedded_bias() {
    let cfg = ToyConfig::gpt2(2, 16, 50, 1);
    let tensors = cfg.tensors();
    let model = Model::from_source(cfg.model_config().unwrap(), &WeightLayout::gpt2(), &tensors).unwrap();
    let bias = &tensors["ln_f.bias"].1;
    let wte = &tensors["wte.weight"].1;
    let want: Vec<f32> = wte.chunks(16).map(|row| dot(row, bias)).collect();
    assert_eq!(model.readout(&[0f32; 16]).unwrap(), want);
    let tr = model.forward(&[1, 2], Capture::NONE).unwrap();
    assert_eq!(model.readout(tr.hidden(2, 1)).unwrap(), tr.final_logits);
    assert!(matches!(
        model.readout(&[0f32; 15]),
        Err(Error::Dimension { expected: 16, got: 15 })
    ));
}

#[test]
fn readout_argmax_is_scale_invariant_without_bias() {
    let cfg = ToyConfig::gpt2(2, 16, 50, 2);
    let mut tensors = cfg.tensors();
    tensors.get_mut("ln_f.bias").unwrap().1.fill(0.0);
    let model = Model::from_source(cfg.model_config().unwrap(), &WeightLayout::gpt2(), &tensors).unwrap();
    let tr = model.forward(&[4, 8, 15, 16, 23, 42], Capture::NONE).unwrap();
    for l in 0..=2 {
        for t in 0..6 {
            let h = tr.hidden(l, t);
            let doubled: Vec<f32> = h.iter().map(|x| 2.0 * x).collect();
            assert_eq!(
                argmax(&model.readout(h).unwrap()),
                argmax(&model.readout(&doubled).unwrap())
            );
        }
    }
}

#[test]
fn residual_metrics_modes() {
    let model = toy_gpt2(3, 23);
    let ids = gpt2_tokenizer().encode("Therefore, Person3 is Person1's");
    let tr = model.forward(&ids, Capture::ALL).unwrap();
    let bare = model.forward(&ids, Capture::NONE).unwrap();
    for mode in [MetricsMode::FinalToken, MetricsMode::AllTokensMean] {
        let m = residual_metrics(&tr, mode);
        let m2 = residual_metrics(&bare, mode);
        assert_eq!(m.layers.len(), 3);
        for (a, b) in m.layers.iter().zip(&m2.layers) {
            assert!(a.ratio >= 0.0 && (-1.0..=1.0).contains(&a.cossim));
            assert!((a.ratio - b.ratio).abs() < 1e-4 && (a.cossim - b.cossim).abs() < 1e-4);
        }
    }
    let last = residual_metrics(&tr, MetricsMode::FinalToken).layers[0];
    let all = residual_metrics(&tr, MetricsMode::AllTokensMean).layers[0];
    assert_ne!(last.ratio, all.ratio);
}

#[test]
fn attention_mass_on_key() {
    let model = ToyConfig {
        zero_qk: true,
        ..ToyConfig::gpt2(2, 16, 50, 3)
    }
    .build()
    .unwrap();
    let ids = [3, 7, 9, 11, 2, 4];
    let no_att = model.forward(&ids, Capture::NONE).unwrap();
    assert!(matches!(attention_to_token(&no_att, 2), Err(Error::Capability(_))));
    let tr = model.forward(&ids, Capture::ALL).unwrap();
    let prof = attention_to_token(&tr, 2).unwrap();
    assert_eq!(prof.values.len(), 2);
    for row in &prof.values {
        assert_eq!(row.len(), 4);
        for (k, &v) in row.iter().enumerate() {
            let q = 2 + k;
            assert!((v - 1.0 / (q + 1) as f64).abs() < 1e-6);
        }
    }
    assert!(attention_to_token(&tr, 6).is_err());
}
