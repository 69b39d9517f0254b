// SPDX-License-Identifier: MIT OR Apache-2.0

//! Train/test split keyed on relation-combination signatures.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::relation::Relation;
use super::story::Story;
use crate::error::{Error, Result};
use crate::seed;

/// The ordered relation sequence of a story.
pub fn signature(story: &Story) -> Vec<Relation> {
    story.relations()
}

/// Splits stories so that no relation signature occurs on both sides.
///
/// Signatures are shuffled under `seed` and moved into the test split until
/// it holds at least `test_fraction` of the stories; at least one signature
/// stays on each side.
pub fn split_dataset<T: Clone>(
    stories: &[T],
    test_fraction: f64,
    seed: u64,
    key: impl Fn(&T) -> Vec<Relation>,
) -> Result<(Vec<T>, Vec<T>)> {
    if stories.is_empty() {
        return Err(Error::Split("no stories to split".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut counts: BTreeMap<Vec<Relation>, usize> = BTreeMap::new();
    for s in stories {
        *counts.entry(key(s)).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Split("need at least two distinct relation signatures".into()));
    }
    let mut sigs: Vec<&Vec<Relation>> = counts.keys().collect();
    sigs.shuffle(&mut seed::rng(seed));

    let target = (test_fraction * stories.len() as f64).round() as usize;
    let mut test_sigs = BTreeSet::new();
    let mut in_test = 0;
    for sig in &sigs[..sigs.len() - 1] {
        if in_test >= target.max(1) {
            break;
        }
        in_test += counts[*sig];
        test_sigs.insert((*sig).clone());
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for s in stories {
        if test_sigs.contains(&key(s)) {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, test))
}

/// [`split_dataset`] over plain stories.
pub fn split_stories(stories: &[Story], test_fraction: f64, seed: u64) -> Result<(Vec<Story>, Vec<Story>)> {
    split_dataset(stories, test_fraction, seed, signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinship::story::Fact;
    use Relation::*;

    fn story(rels: &[Relation]) -> Story {
        Story::from_facts(
            rels.iter()
                .enumerate()
                .map(|(i, &rel)| Fact {
                    subj: i,
                    rel,
                    obj: i + 1,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_signature_case() {
        let a = story(&[Brother, Brother]);
        let b = story(&[Son, Sister]);
        let all = vec![a.clone(), a, b.clone()];
        for seed in 0..10 {
            let (train, test) = split_stories(&all, 0.5, seed).unwrap();
            assert_eq!(train.len() + test.len(), 3);
            let with_b = if train.contains(&b) { &train } else { &test };
            assert!(with_b.iter().all(|s| s == &b));
        }
    }

    #[test]
    fn errors() {
        let a = story(&[Brother, Brother]);
        assert!(split_stories(&[], 0.5, 0).is_err());
        assert!(split_stories(&[a.clone(), a.clone()], 0.5, 0).is_err());
        assert!(split_stories(&[a.clone(), story(&[Son, Son])], 1.0, 0).is_err());
    }
}
