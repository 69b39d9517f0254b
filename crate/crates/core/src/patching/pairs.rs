// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counterfactual pair construction and flip filtering.

use serde::{Deserialize, Serialize};

use super::MIN_DENOMINATOR;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kinship::{mutate_story, Gender, Relation, Story, StoryRecord};
use crate::lens::argmax;
use crate::model::{Capture, Model};
use crate::tokenizer::Tokenizer;

/// Which replacements are tried on each base story.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationMode {
    /// Base stories of brothers and sisters only. Inner positions become
    /// father/mother, the first and last become uncle/aunt.
    SiblingsOnly,
    /// Any base story; each relation becomes brother/sister.
    AllRelations,
}

impl MutationMode {
    /// The replacement for `position`, or `None` when this mode skips it.
    pub fn replacement(self, relations: &[Relation], position: usize) -> Option<Relation> {
        let old = *relations.get(position)?;
        let gender = old.gender();
        let pick = |male, female| match gender {
            Gender::Male => male,
            Gender::Female => female,
        };
        match self {
            MutationMode::SiblingsOnly => {
                if !relations.iter().all(|r| r.is_sibling()) {
                    return None;
                }
                let edge = position == 0 || position + 1 == relations.len();
                Some(if edge {
                    pick(Relation::Uncle, Relation::Aunt)
                } else {
                    pick(Relation::Father, Relation::Mother)
                })
            }
            MutationMode::AllRelations => {
                let new = pick(Relation::Brother, Relation::Sister);
                (new != old).then_some(new)
            }
        }
    }
}

/// A rendered story with token positions of its relation words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedPrompt {
    pub text: String,
    pub ids: Vec<u32>,
    /// Token index of each relation word, in fact order.
    pub relation_tokens: Vec<usize>,
}

impl PreparedPrompt {
    pub fn new(tok: &Tokenizer, record: &StoryRecord, story: &Story) -> Result<Self> {
        let prompt = record.render(story);
        let enc = tok.encode_with_offsets(&prompt.text);
        let spans = crate::tokenizer::locate_in(&enc, &prompt.text, &prompt.relation_char_spans)?;
        Ok(PreparedPrompt {
            ids: enc.iter().map(|e| e.id).collect(),
            text: prompt.text,
            relation_tokens: spans.relations,
        })
    }

    /// Index of the final token `T`.
    pub fn last(&self) -> usize {
        self.ids.len() - 1
    }
}

/// An original/counterfactual prompt pair on which top-1 changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualPair {
    pub id: String,
    pub story_id: String,
    pub hops: usize,
    pub replaced_position: usize,
    pub from: Relation,
    pub to: Relation,
    pub story_a: Story,
    pub story_b: Story,
    pub text_a: String,
    pub text_b: String,
    pub ids_a: Vec<u32>,
    pub ids_b: Vec<u32>,
    /// Token index of the replaced relation word.
    pub t_r: usize,
    /// Top-1 of the original run.
    pub o: u32,
    /// Top-1 of the counterfactual run.
    pub c: u32,
    pub ld_a: f64,
    pub ld_b: f64,
}

impl CounterfactualPair {
    /// Index of the final token.
    pub fn last(&self) -> usize {
        self.ids_a.len() - 1
    }
}

/// Why candidates were dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchCounts {
    pub candidates: usize,
    /// Mode does not apply to the story or position.
    pub skipped: usize,
    /// Token sequences do not differ at exactly the replaced word.
    pub misaligned: usize,
    pub no_flip: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipSearch {
    pub pairs: Vec<CounterfactualPair>,
    pub n_target: usize,
    pub counts: SearchCounts,
}

impl FlipSearch {
    /// `(found, wanted)` when fewer than `n_target` pairs flipped.
    pub fn shortfall(&self) -> Option<(usize, usize)> {
        (self.pairs.len() < self.n_target).then_some((self.pairs.len(), self.n_target))
    }
}

enum Outcome {
    Pair(Box<CounterfactualPair>),
    Skipped,
    Misaligned,
    NoFlip,
    Degenerate,
}

fn story_candidates(model: &Model, tok: &Tokenizer, record: &StoryRecord, mode: MutationMode) -> Result<Vec<Outcome>> {
    let story = record.story()?;
    let relations = story.relations();
    let positions: Vec<(usize, Relation)> = (0..relations.len())
        .filter_map(|p| mode.replacement(&relations, p).map(|r| (p, r)))
        .collect();
    let skipped = relations.len() - positions.len();
    let mut out: Vec<Outcome> = (0..skipped).map(|_| Outcome::Skipped).collect();
    if positions.is_empty() {
        return Ok(out);
    }
    let prompt_a = PreparedPrompt::new(tok, record, &story)?;
    let logits_a = model.forward(&prompt_a.ids, Capture::NONE)?.final_logits;
    let o = argmax(&logits_a) as u32;
    for (position, to) in positions {
        let story_b = mutate_story(&story, position, to)?;
        let prompt_b = PreparedPrompt::new(tok, record, &story_b)?;
        let t_r = prompt_a.relation_tokens[position];
        let aligned = prompt_a.ids.len() == prompt_b.ids.len()
            && prompt_a
                .ids
                .iter()
                .zip(&prompt_b.ids)
                .enumerate()
                .all(|(j, (x, y))| (x == y) != (j == t_r));
        if !aligned {
            out.push(Outcome::Misaligned);
            continue;
        }
        let logits_b = model.forward(&prompt_b.ids, Capture::NONE)?.final_logits;
        let c = argmax(&logits_b) as u32;
        if c == o {
            out.push(Outcome::NoFlip);
            continue;
        }
        let ld = |l: &[f32]| l[o as usize] as f64 - l[c as usize] as f64;
        let (ld_a, ld_b) = (ld(&logits_a), ld(&logits_b));
        if ld_a - ld_b < MIN_DENOMINATOR {
            out.push(Outcome::Degenerate);
            continue;
        }
        out.push(Outcome::Pair(Box::new(CounterfactualPair {
            id: format!("{}-p{position}", record.id),
            story_id: record.id.clone(),
            hops: record.hops,
            replaced_position: position,
            from: relations[position],
            to,
            story_a: story.clone(),
            story_b,
            text_a: prompt_a.text.clone(),
            text_b: prompt_b.text,
            ids_a: prompt_a.ids.clone(),
            ids_b: prompt_b.ids,
            t_r,
            o,
            c,
            ld_a,
            ld_b,
        })));
    }
    Ok(out)
}

/// Tries every applicable replacement of every base story, in order, and
/// keeps the first `n_target` pairs whose top-1 prediction flips.
pub fn find_flip_pairs(
    model: &Model,
    tok: &Tokenizer,
    stories: &[StoryRecord],
    mode: MutationMode,
    n_target: usize,
    exec: Exec,
) -> Result<FlipSearch> {
    let mut search = FlipSearch {
        pairs: Vec::new(),
        n_target,
        counts: SearchCounts::default(),
    };
    let batch = match exec {
        Exec::Sequential => 1,
        Exec::Parallel => 8,
    };
    'outer: for chunk in stories.chunks(batch) {
        if search.pairs.len() >= n_target {
            break;
        }
        let results = exec.map(chunk, |r| story_candidates(model, tok, r, mode));
        for (record, result) in chunk.iter().zip(results) {
            let outcomes = result.map_err(|e| match e {
                Error::Alignment { .. } => Error::Precondition(format!(
                    "story {}: relation words do not align with tokens: {e}",
                    record.id
                )),
                other => other,
            })?;
            for outcome in outcomes {
                search.counts.candidates += 1;
                match outcome {
                    Outcome::Pair(p) => {
                        search.pairs.push(*p);
                        if search.pairs.len() >= n_target {
                            break 'outer;
                        }
                    }
                    Outcome::Skipped => search.counts.skipped += 1,
                    Outcome::Misaligned => search.counts.misaligned += 1,
                    Outcome::NoFlip => search.counts.no_flip += 1,
                    Outcome::Degenerate => search.counts.degenerate += 1,
                }
            }
        }
    }
    if let Some((found, wanted)) = search.shortfall() {
        log::warn!("only {found} of {wanted} counterfactual pairs flip");
    }
    Ok(search)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Relation::*;

    #[test]
    fn siblings_plan() {
        let rels = [Brother, Sister, Sister, Brother];
        let m = MutationMode::SiblingsOnly;
        assert_eq!(m.replacement(&rels, 0), Some(Uncle));
        assert_eq!(m.replacement(&rels, 1), Some(Mother));
        assert_eq!(m.replacement(&rels, 2), Some(Mother));
        assert_eq!(m.replacement(&rels, 3), Some(Uncle));
        assert_eq!(m.replacement(&[Brother, Son], 0), None);
    }

    #[test]
    fn all_relations_plan() {
        let m = MutationMode::AllRelations;
        assert_eq!(m.replacement(&[Mother, Brother, Nephew], 0), Some(Sister));
        assert_eq!(m.replacement(&[Mother, Brother, Nephew], 1), None);
        assert_eq!(m.replacement(&[Mother, Brother, Nephew], 2), Some(Brother));
    }
}
