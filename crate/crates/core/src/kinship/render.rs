// SPDX-License-Identifier: MIT OR Apache-2.0

//! Surface realisation of stories as completion prompts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::relation::{KinType, Relation};
use super::story::{Fact, Story};
use crate::seed;

/// Sentence forms a fact can be rendered with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Template {
    /// "X is Y's rel."
    Possessive,
    /// "Y has a rel called X."
    Have,
    /// "X is a rel of Y."
    Copula,
}

const TEMPLATES: [Template; 3] = [Template::Possessive, Template::Have, Template::Copula];

pub const SUFFIX_LEAD: &str = "Therefore, ";

/// Byte span `start..end` of a relation word inside the prompt text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// One span per fact, in fact order.
    pub relation_char_spans: Vec<Span>,
    /// Offset just past the final possessive (equals `text.len()`).
    pub query_final_char: usize,
    /// `(person id, index)` pairs: person is rendered as `Person{index}`.
    pub naming: Vec<(usize, usize)>,
    pub templates: Vec<Template>,
}

impl RenderedPrompt {
    pub fn name_of(&self, person: usize) -> Option<String> {
        self.naming
            .iter()
            .find(|(p, _)| *p == person)
            .map(|(_, i)| format!("Person{i}"))
    }
}

fn article(rel: Relation) -> &'static str {
    if rel.kintype() == KinType::Spouse {
        "the"
    } else if rel.word().starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

/// Renders a story. Template choice and name assignment depend only on
/// `template_seed` and the story's shape, so a mutated story rendered with
/// the same seed differs from its original only in the replaced word.
pub fn render_prompt(story: &Story, template_seed: u64) -> RenderedPrompt {
    let mut rng = seed::rng(template_seed);
    let persons = story.persons();
    let mut indices: Vec<usize> = (1..=persons.len()).collect();
    indices.shuffle(&mut rng);
    let naming: Vec<(usize, usize)> = persons.iter().copied().zip(indices).collect();
    let name = |p: usize| {
        let i = naming.iter().find(|(q, _)| *q == p).map(|(_, i)| *i).unwrap();
        format!("Person{i}")
    };

    let templates: Vec<Template> = story
        .facts
        .iter()
        .map(|_| TEMPLATES[rng.random_range(0..TEMPLATES.len())])
        .collect();

    let mut text = String::new();
    let mut spans = Vec::with_capacity(story.facts.len());
    for (fact, &template) in story.facts.iter().zip(&templates) {
        let Fact { subj, rel, obj } = *fact;
        let (subj, obj) = (name(subj), name(obj));
        let word = rel.word();
        let (before, after) = match template {
            Template::Possessive => (format!("{obj} is {subj}'s "), ".".to_string()),
            Template::Have => (format!("{subj} has {} ", article(rel)), format!(" called {obj}.")),
            Template::Copula => (format!("{obj} is {} ", article(rel)), format!(" of {subj}.")),
        };
        text.push_str(&before);
        let start = text.len();
        text.push_str(word);
        spans.push(Span { start, end: text.len() });
        text.push_str(&after);
        text.push('\n');
    }
    let (a, b) = story.query;
    text.push_str(&format!("{SUFFIX_LEAD}{} is {}'s", name(a), name(b)));

    RenderedPrompt {
        query_final_char: text.len(),
        text,
        relation_char_spans: spans,
        naming,
        templates,
    }
}
