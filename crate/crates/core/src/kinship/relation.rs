// SPDX-License-Identifier: MIT OR Apache-2.0

//! Kinship labels and the relative-kinship algebra used to compose chains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn flip(self) -> Gender {
        match self {
            Gender::Female => Gender::Male,
            Gender::Male => Gender::Female,
        }
    }
}

/// Gender-free relationship category shared by a gendered pair of relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KinType {
    SelfRef,
    Spouse,
    Parent,
    Grandparent,
    Child,
    Grandchild,
    Sibling,
    ParentSibling,
    SiblingChild,
    Undefined,
}

/// A gendered family relation: "X is Y's `<relation>`".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Mother,
    Father,
    Grandmother,
    Grandfather,
    Son,
    Daughter,
    Grandson,
    Granddaughter,
    Brother,
    Sister,
    Uncle,
    Aunt,
    Nephew,
    Niece,
    Wife,
    Husband,
}

impl Relation {
    pub const ALL: [Relation; 16] = [
        Relation::Mother,
        Relation::Father,
        Relation::Grandmother,
        Relation::Grandfather,
        Relation::Son,
        Relation::Daughter,
        Relation::Grandson,
        Relation::Granddaughter,
        Relation::Brother,
        Relation::Sister,
        Relation::Uncle,
        Relation::Aunt,
        Relation::Nephew,
        Relation::Niece,
        Relation::Wife,
        Relation::Husband,
    ];

    /// The answer set: every relation except the spousal pair, in the
    /// order used for answer-token tables.
    pub const ANSWERS: [Relation; 14] = [
        Relation::Mother,
        Relation::Father,
        Relation::Grandfather,
        Relation::Grandmother,
        Relation::Son,
        Relation::Daughter,
        Relation::Grandson,
        Relation::Granddaughter,
        Relation::Brother,
        Relation::Sister,
        Relation::Uncle,
        Relation::Aunt,
        Relation::Nephew,
        Relation::Niece,
    ];

    pub fn word(self) -> &'static str {
        match self {
            Relation::Mother => "mother",
            Relation::Father => "father",
            Relation::Grandmother => "grandmother",
            Relation::Grandfather => "grandfather",
            Relation::Son => "son",
            Relation::Daughter => "daughter",
            Relation::Grandson => "grandson",
            Relation::Granddaughter => "granddaughter",
            Relation::Brother => "brother",
            Relation::Sister => "sister",
            Relation::Uncle => "uncle",
            Relation::Aunt => "aunt",
            Relation::Nephew => "nephew",
            Relation::Niece => "niece",
            Relation::Wife => "wife",
            Relation::Husband => "husband",
        }
    }

    pub fn gender(self) -> Gender {
        use Relation::*;
        match self {
            Mother | Grandmother | Daughter | Granddaughter | Sister | Aunt | Niece | Wife => Gender::Female,
            Father | Grandfather | Son | Grandson | Brother | Uncle | Nephew | Husband => Gender::Male,
        }
    }

    pub fn kintype(self) -> KinType {
        use Relation::*;
        match self {
            Mother | Father => KinType::Parent,
            Grandmother | Grandfather => KinType::Grandparent,
            Son | Daughter => KinType::Child,
            Grandson | Granddaughter => KinType::Grandchild,
            Brother | Sister => KinType::Sibling,
            Uncle | Aunt => KinType::ParentSibling,
            Nephew | Niece => KinType::SiblingChild,
            Wife | Husband => KinType::Spouse,
        }
    }

    /// The same relation with the opposite gender.
    pub fn counterpart(self) -> Relation {
        Relation::from_parts(self.kintype(), self.gender().flip()).expect("every relation has a counterpart")
    }

    /// Builds the relation naming `(kintype, gender)`, if there is one.
    pub fn from_parts(kintype: KinType, gender: Gender) -> Option<Relation> {
        use Gender::*;
        use Relation::*;
        Some(match (kintype, gender) {
            (KinType::Parent, Female) => Mother,
            (KinType::Parent, Male) => Father,
            (KinType::Grandparent, Female) => Grandmother,
            (KinType::Grandparent, Male) => Grandfather,
            (KinType::Child, Female) => Daughter,
            (KinType::Child, Male) => Son,
            (KinType::Grandchild, Female) => Granddaughter,
            (KinType::Grandchild, Male) => Grandson,
            (KinType::Sibling, Female) => Sister,
            (KinType::Sibling, Male) => Brother,
            (KinType::ParentSibling, Female) => Aunt,
            (KinType::ParentSibling, Male) => Uncle,
            (KinType::SiblingChild, Female) => Niece,
            (KinType::SiblingChild, Male) => Nephew,
            (KinType::Spouse, Female) => Wife,
            (KinType::Spouse, Male) => Husband,
            _ => return None,
        })
    }

    /// Whether the relation is a valid gold answer.
    pub fn is_answer(self) -> bool {
        self.kintype() != KinType::Spouse
    }

    pub fn is_sibling(self) -> bool {
        self.kintype() == KinType::Sibling
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.word() == s)
            .ok_or_else(|| Error::Config(format!("unknown relation `{s}`")))
    }
}

/// Kinship of the current chain endpoint relative to the chain's anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KinState {
    pub kintype: KinType,
    pub gender: Option<Gender>,
}

impl KinState {
    pub const SELF: KinState = KinState {
        kintype: KinType::SelfRef,
        gender: None,
    };

    pub const UNDEFINED: KinState = KinState {
        kintype: KinType::Undefined,
        gender: None,
    };

    pub fn is_undefined(&self) -> bool {
        self.kintype == KinType::Undefined
    }

    /// Moves one hop: `next` is `step` of the current endpoint.
    ///
    /// Transitions are only defined where the result is the same in every
    /// three-generation tree the generator can build, assuming the walk never
    /// returns to the anchor. Everything else is `Undefined`, which absorbs.
    pub fn step(self, step: Relation) -> KinState {
        let gender = Some(step.gender());
        let kintype = transition(self.kintype, step.kintype());
        if kintype == KinType::Undefined {
            KinState::UNDEFINED
        } else {
            KinState { kintype, gender }
        }
    }

    /// The answer relation named by this state, if any.
    pub fn answer(&self) -> Option<Relation> {
        match self.kintype {
            KinType::SelfRef | KinType::Spouse | KinType::Undefined => None,
            k => Relation::from_parts(k, self.gender?),
        }
    }
}

fn transition(state: KinType, step: KinType) -> KinType {
    use KinType::*;
    match (state, step) {
        (Undefined, _) => Undefined,
        (SelfRef, s) => s,
        // spousal hops only open a chain
        (_, Spouse) => Undefined,

        (Spouse, Child) => Child,
        (Spouse, Grandchild) => Grandchild,

        (Parent, Parent) => Grandparent,
        (Parent, Child) => Sibling,
        (Parent, Sibling) => ParentSibling,

        (Child, Child) => Grandchild,
        (Child, Sibling) => Child,
        (Child, SiblingChild) => Grandchild,

        (Grandchild, Sibling) => Grandchild,
        (Grandchild, ParentSibling) => Child,

        (Sibling, Parent) => Parent,
        (Sibling, Grandparent) => Grandparent,
        (Sibling, Child) => SiblingChild,
        (Sibling, Sibling) => Sibling,
        (Sibling, ParentSibling) => ParentSibling,

        (ParentSibling, Parent) => Grandparent,

        (SiblingChild, Grandparent) => Parent,
        (SiblingChild, Sibling) => SiblingChild,
        (SiblingChild, ParentSibling) => Sibling,

        // child∘parent is self or spouse; the rest leave the answer set
        // or are ambiguous between several kintypes.
        _ => Undefined,
    }
}

/// Composes a chain of relations read from the anchor outwards.
///
/// `[son, sister]` means "the anchor's son's sister", which is the anchor's
/// daughter. Returns `None` when the composition is not a single answer
/// relation.
pub fn compose_chain(relations: &[Relation]) -> Option<Relation> {
    compose_state(relations).answer()
}

/// Folds the chain into its final [`KinState`].
pub fn compose_state(relations: &[Relation]) -> KinState {
    relations.iter().fold(KinState::SELF, |state, &r| state.step(r))
}

#[cfg(test)]
mod tests {
    use super::Relation::*;
    use super::*;

    #[test]
    fn worked_examples() {
        assert_eq!(compose_chain(&[Son, Sister]), Some(Daughter));
        assert_eq!(compose_chain(&[Wife, Son, Son, Brother, Brother]), Some(Grandson));
        assert_eq!(compose_chain(&[Brother]), Some(Brother));
        assert_eq!(compose_chain(&[Brother, Brother, Father]), Some(Father));
        assert_eq!(compose_chain(&[Brother, Father, Brother]), Some(Uncle));
    }

    #[test]
    fn spouse_never_answers() {
        assert_eq!(compose_chain(&[Wife]), None);
        assert_eq!(compose_chain(&[Son, Wife]), None);
        assert_eq!(compose_chain(&[Father, Wife]), None);
    }

    #[test]
    fn undefined_absorbs() {
        let mid = compose_state(&[Son, Father]);
        assert!(mid.is_undefined());
        assert!(mid.step(Brother).is_undefined());
    }

    #[test]
    fn counterparts_are_unique_involutions() {
        for r in Relation::ALL {
            let c = r.counterpart();
            assert_ne!(r, c);
            assert_eq!(c.counterpart(), r);
            assert_eq!(c.kintype(), r.kintype());
        }
    }

    #[test]
    fn answer_set_excludes_spouses() {
        assert_eq!(Relation::ANSWERS.len(), 14);
        assert!(Relation::ANSWERS.iter().all(|r| r.is_answer()));
        assert!(!Wife.is_answer() && !Husband.is_answer());
        let mut words: Vec<_> = Relation::ANSWERS.iter().map(|r| r.word()).collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 14);
    }

    #[test]
    fn parse_round_trip() {
        for r in Relation::ALL {
            assert_eq!(r.word().parse::<Relation>().unwrap(), r);
        }
        assert!("cousin".parse::<Relation>().is_err());
    }
}
