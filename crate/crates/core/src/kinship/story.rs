// SPDX-License-Identifier: MIT OR Apache-2.0

//! k-hop stories: chain sampling over a tree and counterfactual mutation.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::relation::{compose_chain, KinState, Relation};
use super::tree::FamilyTree;
use crate::error::{Error, Result};
use crate::seed;

pub const MIN_HOPS: usize = 2;
pub const MAX_HOPS: usize = 15;

/// Node budget for one chain search before giving up on a tree.
const SEARCH_BUDGET: usize = 200_000;

/// "`obj` is `subj`'s `rel`".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub subj: usize,
    pub rel: Relation,
    pub obj: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub position: usize,
    pub from: Relation,
    pub to: Relation,
}

/// An ordered chain of facts. The first fact's subject is the anchor
/// (`query.1`), the last fact's object is the queried person (`query.0`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub facts: Vec<Fact>,
    /// `(person_a, person_b)`: the question is "person_a is person_b's ?".
    pub query: (usize, usize),
    pub gold: Option<Relation>,
    pub mutation: Option<Mutation>,
}

impl Story {
    pub fn hops(&self) -> usize {
        self.facts.len()
    }

    pub fn relations(&self) -> Vec<Relation> {
        self.facts.iter().map(|f| f.rel).collect()
    }

    /// Distinct persons in order of first mention along the chain.
    pub fn persons(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for f in &self.facts {
            for p in [f.subj, f.obj] {
                if !seen.contains(&p) {
                    seen.push(p);
                }
            }
        }
        seen
    }

    /// Builds a story from an explicit chain, checking chain structure.
    pub fn from_facts(facts: Vec<Fact>) -> Result<Story> {
        if facts.is_empty() {
            return Err(Error::Precondition("story needs at least one fact".into()));
        }
        for w in facts.windows(2) {
            if w[0].obj != w[1].subj {
                return Err(Error::Precondition(format!(
                    "facts do not chain: object {} then subject {}",
                    w[0].obj, w[1].subj
                )));
            }
        }
        let query = (facts[facts.len() - 1].obj, facts[0].subj);
        let gold = compose_chain(&facts.iter().map(|f| f.rel).collect::<Vec<_>>());
        Ok(Story {
            facts,
            query,
            gold,
            mutation: None,
        })
    }
}

/// Which relations a sampled chain may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationFilter {
    #[default]
    All,
    /// brother/sister only; the gold answer is then brother or sister.
    SiblingsOnly,
}

impl RelationFilter {
    fn allows(self, r: Relation) -> bool {
        match self {
            RelationFilter::All => true,
            RelationFilter::SiblingsOnly => r.is_sibling(),
        }
    }
}

/// Samples a `hops`-fact chain whose composition is an answer relation.
///
/// The walk never returns to the anchor, never states the same ordered
/// person pair twice, and only uses a spousal relation as its first fact.
pub fn sample_story(tree: &FamilyTree, hops: usize, seed: u64) -> Result<Story> {
    sample_story_with(tree, hops, seed, RelationFilter::All)
}

pub fn sample_story_with(tree: &FamilyTree, hops: usize, seed: u64, filter: RelationFilter) -> Result<Story> {
    if !(MIN_HOPS..=MAX_HOPS).contains(&hops) {
        return Err(Error::Config(format!(
            "hops must be in {MIN_HOPS}..={MAX_HOPS}, got {hops}"
        )));
    }
    let mut rng = seed::rng(seed);
    let neighbours: Vec<Vec<(Relation, usize)>> = (0..tree.len())
        .map(|id| {
            tree.neighbours(id)
                .into_iter()
                .filter(|(r, _)| filter.allows(*r))
                .collect()
        })
        .collect();

    let mut anchors: Vec<usize> = (0..tree.len()).filter(|&id| !neighbours[id].is_empty()).collect();
    anchors.shuffle(&mut rng);

    let mut budget = SEARCH_BUDGET;
    for anchor in anchors {
        let mut search = ChainSearch {
            neighbours: &neighbours,
            anchor,
            hops,
            used: HashSet::new(),
            facts: Vec::with_capacity(hops),
            budget: &mut budget,
        };
        if search.extend(anchor, KinState::SELF, &mut rng) {
            let facts = search.facts;
            return Story::from_facts(facts);
        }
        if budget == 0 {
            break;
        }
    }
    Err(Error::SamplingExhausted {
        hops,
        attempts: SEARCH_BUDGET - budget,
    })
}

struct ChainSearch<'a> {
    neighbours: &'a [Vec<(Relation, usize)>],
    anchor: usize,
    hops: usize,
    used: HashSet<(usize, usize)>,
    facts: Vec<Fact>,
    budget: &'a mut usize,
}

impl ChainSearch<'_> {
    fn extend(&mut self, current: usize, state: KinState, rng: &mut impl rand::Rng) -> bool {
        if self.facts.len() == self.hops {
            return state.answer().is_some();
        }
        let first = self.facts.is_empty();
        let mut options: Vec<(Relation, usize, KinState)> = self.neighbours[current]
            .iter()
            .filter(|&&(rel, next)| {
                next != self.anchor && (first || rel.is_answer()) && !self.used.contains(&(current, next))
            })
            .filter_map(|&(rel, next)| {
                let s = state.step(rel);
                (!s.is_undefined()).then_some((rel, next, s))
            })
            .collect();
        options.shuffle(rng);
        for (rel, next, s) in options {
            if *self.budget == 0 {
                return false;
            }
            *self.budget -= 1;
            self.used.insert((current, next));
            self.facts.push(Fact {
                subj: current,
                rel,
                obj: next,
            });
            if self.extend(next, s, rng) {
                return true;
            }
            self.facts.pop();
            self.used.remove(&(current, next));
        }
        false
    }
}

/// Replaces the relation at `position`, recomputing the gold answer.
///
/// The replacement must have the same gender as the replaced relation. The
/// new gold may be `None` when the mutated chain leaves the answer set.
pub fn mutate_story(story: &Story, position: usize, new_relation: Relation) -> Result<Story> {
    let len = story.hops();
    let old = story
        .facts
        .get(position)
        .ok_or(Error::Index { index: position, len })?
        .rel;
    if old.gender() != new_relation.gender() {
        return Err(Error::Mutation(format!(
            "cannot replace {old} with {new_relation}: gender differs"
        )));
    }
    let mut out = story.clone();
    out.facts[position].rel = new_relation;
    out.gold = compose_chain(&out.relations());
    out.mutation = Some(Mutation {
        position,
        from: old,
        to: new_relation,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinship::tree::{build_tree, TreeConfig};
    use Relation::*;

    fn chain(rels: &[Relation]) -> Story {
        let facts = rels
            .iter()
            .enumerate()
            .map(|(i, &rel)| Fact {
                subj: i,
                rel,
                obj: i + 1,
            })
            .collect();
        Story::from_facts(facts).unwrap()
    }

    #[test]
    fn two_hop_contract() {
        let tree = build_tree(&TreeConfig::new(4, 3)).unwrap();
        let s = sample_story(&tree, 2, 11).unwrap();
        assert_eq!(s.hops(), 2);
        assert!(s.gold.unwrap().is_answer());
        assert_eq!(s.query.1, s.facts[0].subj);
        assert_eq!(s.query.0, s.facts[1].obj);
    }

    #[test]
    fn sampling_is_deterministic() {
        let tree = build_tree(&TreeConfig::new(4, 5)).unwrap();
        assert_eq!(sample_story(&tree, 6, 99).unwrap(), sample_story(&tree, 6, 99).unwrap());
    }

    #[test]
    fn hop_range_enforced() {
        let tree = build_tree(&TreeConfig::new(4, 5)).unwrap();
        assert!(sample_story(&tree, 1, 0).is_err());
        assert!(sample_story(&tree, 16, 0).is_err());
    }

    #[test]
    fn chains_never_repeat_pairs_or_revisit_anchor() {
        for seed in 0..60 {
            let tree = build_tree(&TreeConfig::new(4, seed)).unwrap();
            let Ok(s) = sample_story(&tree, 8, seed) else { continue };
            let mut pairs = HashSet::new();
            for (i, f) in s.facts.iter().enumerate() {
                assert!(pairs.insert((f.subj, f.obj)));
                assert_ne!(f.obj, s.query.1);
                if i > 0 {
                    assert!(f.rel.is_answer());
                }
                assert_eq!(tree.kin_between(f.obj, f.subj).unwrap(), Some(f.rel));
            }
        }
    }

    #[test]
    fn siblings_only_chains() {
        let tree = (0..)
            .map(|s| build_tree(&TreeConfig::new(4, s)).unwrap())
            .find(|t| t.sibling_groups()[0].len() >= 3)
            .unwrap();
        let s = sample_story_with(&tree, 5, 1, RelationFilter::SiblingsOnly).unwrap();
        assert!(s.facts.iter().all(|f| f.rel.is_sibling()));
        assert!(s.gold.unwrap().is_sibling());
    }

    #[test]
    fn one_person_tree_exhausts() {
        let tree = build_tree(&TreeConfig::new(1, 0)).unwrap();
        let err = sample_story_with(&tree, 3, 0, RelationFilter::SiblingsOnly).unwrap_err();
        assert!(matches!(err, Error::SamplingExhausted { .. }));
    }

    #[test]
    fn mutation_examples() {
        let s = chain(&[Brother, Brother, Brother]);
        assert_eq!(s.gold, Some(Brother));
        let m = mutate_story(&s, 1, Father).unwrap();
        assert_eq!(m.gold, Some(Uncle));
        assert_eq!(m.mutation.unwrap().from, Brother);

        let s = chain(&[Brother, Father]);
        assert_eq!(mutate_story(&s, 1, Brother).unwrap().gold, Some(Brother));
    }

    #[test]
    fn identity_mutation_only_tags() {
        let s = chain(&[Son, Sister]);
        let m = mutate_story(&s, 0, Son).unwrap();
        assert_eq!(m.facts, s.facts);
        assert_eq!(m.gold, s.gold);
        assert!(m.mutation.is_some() && s.mutation.is_none());
    }

    #[test]
    fn mutation_errors() {
        let s = chain(&[Brother, Brother]);
        assert!(matches!(mutate_story(&s, 0, Mother), Err(Error::Mutation(_))));
        assert!(matches!(mutate_story(&s, 2, Father), Err(Error::Index { .. })));
    }

    #[test]
    fn mutation_may_leave_answer_set() {
        let s = chain(&[Son, Sister]);
        let m = mutate_story(&s, 1, Wife).unwrap();
        assert_eq!(m.gold, None);
    }
}
