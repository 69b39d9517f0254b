// SPDX-License-Identifier: MIT OR Apache-2.0

//! Family trees, k-hop kinship stories and their prompts.

mod dataset;
mod relation;
mod render;
mod split;
mod story;
mod tree;

pub use dataset::{generate_dataset, read_jsonl, template_seed, write_jsonl, FactRecord, GenConfig, StoryRecord};
pub use relation::{compose_chain, compose_state, Gender, KinState, KinType, Relation};
pub use render::{render_prompt, RenderedPrompt, Span, Template};
pub use split::{signature, split_dataset, split_stories};
pub use story::{
    mutate_story, sample_story, sample_story_with, Fact, Mutation, RelationFilter, Story, MAX_HOPS, MIN_HOPS,
};
pub use tree::{build_tree, FamilyTree, Parents, Person, TreeConfig, MAX_SIBLINGS_LIMIT};
