// SPDX-License-Identifier: MIT OR Apache-2.0

//! Graph-walk oracle for chain composition: instantiate chains in concrete
//! trees and read the endpoint relation straight off the tree.

use std::collections::{BTreeSet, HashSet};

use depthlens::kinship::{build_tree, compose_chain, FamilyTree, Relation, TreeConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CORE: [Relation; 8] = [
    Relation::Mother,
    Relation::Father,
    Relation::Son,
    Relation::Daughter,
    Relation::Brother,
    Relation::Sister,
    Relation::Wife,
    Relation::Husband,
];

/// A tree with its adjacency lists precomputed.
pub struct Indexed {
    pub tree: FamilyTree,
    adj: Vec<Vec<(Relation, usize)>>,
}

impl Indexed {
    pub fn new(tree: FamilyTree) -> Self {
        let adj = (0..tree.len()).map(|id| tree.neighbours(id)).collect();
        Indexed { tree, adj }
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }
}

pub fn trees(n: u64) -> Vec<Indexed> {
    (0..n)
        .map(|s| Indexed::new(build_tree(&TreeConfig::new(if s % 3 == 0 { 6 } else { 4 }, 1000 + s)).unwrap()))
        .collect()
}

/// Persons `next` with `next` being `current`'s `rel`, allowed by the walk
/// rules (never the anchor, no repeated ordered pair, spouses first only).
fn steps(
    tree: &Indexed,
    anchor: usize,
    current: usize,
    rel: Relation,
    depth: usize,
    used: &HashSet<(usize, usize)>,
) -> Vec<usize> {
    if depth > 0 && !rel.is_answer() {
        return Vec::new();
    }
    tree.adj[current]
        .iter()
        .copied()
        .filter(|&(r, next)| r == rel && next != anchor && !used.contains(&(current, next)))
        .map(|(_, next)| next)
        .collect()
}

/// All endpoint relations over every instantiation of `chain` in `tree`.
pub fn instantiations(tree: &Indexed, chain: &[Relation]) -> Vec<Option<Relation>> {
    fn go(
        tree: &Indexed,
        chain: &[Relation],
        anchor: usize,
        current: usize,
        depth: usize,
        used: &mut HashSet<(usize, usize)>,
        out: &mut Vec<Option<Relation>>,
    ) {
        if depth == chain.len() {
            out.push(tree.tree.relation_between(current, anchor).unwrap());
            return;
        }
        for next in steps(tree, anchor, current, chain[depth], depth, used) {
            used.insert((current, next));
            go(tree, chain, anchor, next, depth + 1, used, out);
            used.remove(&(current, next));
        }
    }
    let mut out = Vec::new();
    for anchor in 0..tree.len() {
        go(tree, chain, anchor, anchor, 0, &mut HashSet::new(), &mut out);
    }
    out
}

#[derive(Debug, Default)]
pub struct Agreement {
    pub chains: usize,
    pub instantiable_chains: usize,
    pub instances: usize,
    /// compose gave an answer that some instantiation contradicts.
    pub mismatches: Vec<(Vec<Relation>, Option<Relation>, Option<Relation>)>,
    /// compose abstained although every instantiation seen agreed on one
    /// answer. The two-field state cannot carry the path information these
    /// chains need, so they are reported rather than treated as errors.
    pub missed: Vec<(Vec<Relation>, Relation)>,
}

/// Exhaustive check over every chain of length `1..=max_len`.
pub fn exhaustive(trees: &[Indexed], max_len: usize) -> Agreement {
    let mut chains: Vec<Vec<Relation>> = vec![vec![]];
    let mut all = Vec::new();
    for _ in 0..max_len {
        chains = chains
            .iter()
            .flat_map(|c| {
                CORE.iter().map(move |&r| {
                    let mut n = c.clone();
                    n.push(r);
                    n
                })
            })
            .collect();
        all.extend(chains.iter().cloned());
    }
    let mut report = Agreement::default();
    for chain in all {
        report.chains += 1;
        let composed = compose_chain(&chain);
        let mut seen: BTreeSet<Option<Relation>> = BTreeSet::new();
        let mut n = 0;
        for t in trees {
            for got in instantiations(t, &chain) {
                n += 1;
                if let Some(want) = composed {
                    if got != Some(want) {
                        report.mismatches.push((chain.clone(), composed, got));
                    }
                }
                seen.insert(got);
            }
        }
        if n > 0 {
            report.instantiable_chains += 1;
        }
        report.instances += n;
        if composed.is_none() && seen.len() == 1 {
            if let Some(Some(r)) = seen.into_iter().next() {
                report.missed.push((chain, r));
            }
        }
    }
    report
}

/// Random walks of length `len_lo..=len_hi` in random trees; compares every
/// walk whose chain composes to an answer.
pub fn sampled(cases: usize, len_lo: usize, len_hi: usize, seed: u64) -> (usize, usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = trees(200);
    let mut checked = 0;
    let mut walks = 0;
    let mut mismatches = Vec::new();
    while walks < cases {
        let tree = trees.choose(&mut rng).unwrap();
        let anchor = rng.random_range(0..tree.len());
        let len = rng.random_range(len_lo..=len_hi);
        let mut used = HashSet::new();
        let mut current = anchor;
        let mut chain = Vec::new();
        for depth in 0..len {
            let options: Vec<(Relation, usize)> = CORE
                .iter()
                .flat_map(|&r| {
                    steps(tree, anchor, current, r, depth, &used)
                        .into_iter()
                        .map(move |n| (r, n))
                })
                .collect();
            let Some(&(r, next)) = options.choose(&mut rng) else {
                break;
            };
            used.insert((current, next));
            chain.push(r);
            current = next;
        }
        if chain.len() != len {
            continue;
        }
        walks += 1;
        let got = tree.tree.relation_between(current, anchor).unwrap();
        if let Some(want) = compose_chain(&chain) {
            checked += 1;
            if got != Some(want) {
                mismatches.push(format!("{chain:?}: composed {want}, tree says {got:?}"));
            }
        }
    }
    (walks, checked, mismatches)
}
