// SPDX-License-Identifier: MIT OR Apache-2.0

//! Three-generation family trees and the graph-walk relation oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::relation::{Gender, KinType, Relation};
use crate::error::{Error, Result};
use crate::seed;

/// Largest sibling cap accepted by [`build_tree`].
pub const MAX_SIBLINGS_LIMIT: usize = 6;

/// Probability that a child of the root couple marries (and so can have
/// children of their own).
const MARRIAGE_PROB: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    pub id: usize,
    pub gender: Gender,
    pub generation: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parents {
    pub mother: usize,
    pub father: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_siblings: usize,
    pub seed: u64,
}

impl TreeConfig {
    pub fn new(max_siblings: usize, seed: u64) -> Self {
        TreeConfig { max_siblings, seed }
    }
}

/// A genealogy: one root couple, their children (some married to partners
/// from outside the family) and grandchildren.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyTree {
    pub persons: Vec<Person>,
    parents: Vec<Option<Parents>>,
    spouse: Vec<Option<usize>>,
}

/// Builds a random tree. Identical configs give identical trees.
pub fn build_tree(config: &TreeConfig) -> Result<FamilyTree> {
    if !(1..=MAX_SIBLINGS_LIMIT).contains(&config.max_siblings) {
        return Err(Error::Config(format!(
            "max_siblings must be in 1..={MAX_SIBLINGS_LIMIT}, got {}",
            config.max_siblings
        )));
    }
    let mut rng = seed::rng(config.seed);
    let mut tree = FamilyTree {
        persons: Vec::new(),
        parents: Vec::new(),
        spouse: Vec::new(),
    };

    let grandma = tree.add(Gender::Female, 0, None);
    let grandpa = tree.add(Gender::Male, 0, None);
    tree.marry(grandma, grandpa);

    let root = Parents {
        mother: grandma,
        father: grandpa,
    };
    let n_children = rng.random_range(1..=config.max_siblings);
    let children: Vec<usize> = (0..n_children)
        .map(|_| {
            let g = random_gender(&mut rng);
            tree.add(g, 1, Some(root))
        })
        .collect();

    let mut couples = Vec::new();
    for (i, &child) in children.iter().enumerate() {
        // the first child always marries so that a third generation exists
        if i == 0 || rng.random_bool(MARRIAGE_PROB) {
            let partner = tree.add(tree.gender(child).flip(), 1, None);
            tree.marry(child, partner);
            couples.push(if tree.gender(child) == Gender::Female {
                Parents {
                    mother: child,
                    father: partner,
                }
            } else {
                Parents {
                    mother: partner,
                    father: child,
                }
            });
        }
    }

    for (i, couple) in couples.into_iter().enumerate() {
        let lo = usize::from(i == 0);
        let n = rng.random_range(lo..=config.max_siblings);
        for _ in 0..n {
            let g = random_gender(&mut rng);
            tree.add(g, 2, Some(couple));
        }
    }
    Ok(tree)
}

fn random_gender(rng: &mut impl Rng) -> Gender {
    if rng.random_bool(0.5) {
        Gender::Female
    } else {
        Gender::Male
    }
}

impl FamilyTree {
    fn add(&mut self, gender: Gender, generation: u8, parents: Option<Parents>) -> usize {
        let id = self.persons.len();
        self.persons.push(Person { id, gender, generation });
        self.parents.push(parents);
        self.spouse.push(None);
        id
    }

    fn marry(&mut self, a: usize, b: usize) {
        self.spouse[a] = Some(b);
        self.spouse[b] = Some(a);
    }

    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn gender(&self, id: usize) -> Gender {
        self.persons[id].gender
    }

    pub fn parents(&self, id: usize) -> Option<Parents> {
        self.parents[id]
    }

    pub fn spouse(&self, id: usize) -> Option<usize> {
        self.spouse[id]
    }

    fn check(&self, id: usize) -> Result<()> {
        if id < self.persons.len() {
            Ok(())
        } else {
            Err(Error::UnknownPerson(id))
        }
    }

    fn parent_ids(&self, id: usize) -> impl Iterator<Item = usize> {
        self.parents[id].into_iter().flat_map(|p| [p.mother, p.father])
    }

    fn is_parent(&self, x: usize, y: usize) -> bool {
        self.parent_ids(y).any(|p| p == x)
    }

    fn is_grandparent(&self, x: usize, y: usize) -> bool {
        self.parent_ids(y).any(|p| self.is_parent(x, p))
    }

    fn is_sibling(&self, x: usize, y: usize) -> bool {
        x != y && self.parents[x].is_some() && self.parents[x] == self.parents[y]
    }

    /// Kinship type of `x` relative to `y` (x is y's ...).
    fn kintype_between(&self, x: usize, y: usize) -> KinType {
        if x == y {
            KinType::SelfRef
        } else if self.spouse[y] == Some(x) {
            KinType::Spouse
        } else if self.is_parent(x, y) {
            KinType::Parent
        } else if self.is_parent(y, x) {
            KinType::Child
        } else if self.is_grandparent(x, y) {
            KinType::Grandparent
        } else if self.is_grandparent(y, x) {
            KinType::Grandchild
        } else if self.is_sibling(x, y) {
            KinType::Sibling
        } else if self.parent_ids(y).any(|p| self.is_sibling(x, p)) {
            KinType::ParentSibling
        } else if self.parent_ids(x).any(|p| self.is_sibling(p, y)) {
            KinType::SiblingChild
        } else {
            KinType::Undefined
        }
    }

    /// Any nameable relation of `x` to `y`, spouses included.
    pub fn kin_between(&self, x: usize, y: usize) -> Result<Option<Relation>> {
        self.check(x)?;
        self.check(y)?;
        Ok(Relation::from_parts(self.kintype_between(x, y), self.gender(x)))
    }

    /// The answer-set relation of `x` relative to `y`, or `None` for self,
    /// spouses and relations outside the answer set.
    pub fn relation_between(&self, x: usize, y: usize) -> Result<Option<Relation>> {
        Ok(self.kin_between(x, y)?.filter(|r| r.is_answer()))
    }

    /// Every `(relation, person)` such that `person` is `id`'s `relation`.
    pub fn neighbours(&self, id: usize) -> Vec<(Relation, usize)> {
        (0..self.len())
            .filter_map(|other| {
                Relation::from_parts(self.kintype_between(other, id), self.gender(other)).map(|r| (r, other))
            })
            .collect()
    }

    /// Sibling groups (children sharing both parents), largest first.
    pub fn sibling_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<(Parents, Vec<usize>)> = Vec::new();
        for (id, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                match groups.iter_mut().find(|(q, _)| q == p) {
                    Some((_, g)) => g.push(id),
                    None => groups.push((*p, vec![id])),
                }
            }
        }
        let mut out: Vec<Vec<usize>> = groups.into_iter().map(|(_, g)| g).collect();
        out.sort_by_key(|g| std::cmp::Reverse(g.len()));
        out
    }
}
