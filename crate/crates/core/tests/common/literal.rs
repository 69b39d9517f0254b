// SPDX-License-Identifier: MIT OR Apache-2.0

//! Patched run built directly from the piecewise definition: every layer
//! is recomputed over all positions, then each state is chosen from the
//! base run, the source run or the recomputation.

use depthlens::model::{Capture, Model, ResidualTrace};

/// Returns every patched hidden state `[l][t][d]` and the final logits.
pub fn literal_patch(
    model: &Model,
    ids_a: &[u32],
    ids_b: &[u32],
    layer: usize,
    index: usize,
) -> (Vec<Vec<Vec<f32>>>, Vec<f32>) {
    let a = model.forward(ids_a, Capture::NONE).unwrap();
    let b = model.forward(ids_b, Capture::NONE).unwrap();
    let (t, d) = (b.seq_len, b.d_model);
    let row = |tr: &ResidualTrace, l: usize, j: usize| tr.hidden(l, j).to_vec();

    let mut states: Vec<Vec<Vec<f32>>> = Vec::new();
    for l in 0..=model.n_layers() {
        let recomputed = if l > layer {
            let prev: Vec<f32> = states[l - 1].concat();
            Some(model.apply_block(l - 1, &prev, 0, false).hidden)
        } else {
            None
        };
        let mut layer_states = Vec::with_capacity(t);
        for j in 0..t {
            let s = if l < layer || j < index || (l == layer && j != index) {
                row(&b, l, j)
            } else if l == layer {
                row(&a, l, j)
            } else {
                recomputed.as_ref().unwrap()[j * d..(j + 1) * d].to_vec()
            };
            layer_states.push(s);
        }
        states.push(layer_states);
    }
    let logits = model.readout(&states[model.n_layers()][t - 1]).unwrap();
    (states, logits)
}
