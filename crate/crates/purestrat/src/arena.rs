//! Core game model: concurrent arenas with two observation partitions.
//!
//! An [`Arena`] is a finite state space, an action alphabet per player, a
//! total probabilistic transition function with exact rational probabilities,
//! and one observation partition per player. Probabilities are
//! arbitrary-precision rationals throughout; the qualitative questions the
//! solver answers must be decided exactly, and several of them depend only on
//! the zero/non-zero pattern of the transition function, which exactness makes
//! testable bit for bit.
//!
//! State and action identifiers are strings in the file format and dense
//! integer indices internally; every set computation runs on bit sets over
//! those indices.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::bitset::StateSet;

/// Dense index of a state.
pub type StateId = usize;
/// Dense index of an action (per player alphabet).
pub type ActionId = usize;
/// Dense index of an observation class within a partition.
pub type ClassId = usize;

/// Winning condition kind, interpreted with respect to a final-state set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectiveKind {
    /// Some final state is eventually visited.
    Reachability,
    /// No final state is ever visited.
    Safety,
    /// Final states are visited infinitely often.
    Buchi,
    /// Final states are visited finitely often.
    CoBuchi,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::Reachability => f.write_str("reachability"),
            ObjectiveKind::Safety => f.write_str("safety"),
            ObjectiveKind::Buchi => f.write_str("buchi"),
            ObjectiveKind::CoBuchi => f.write_str("co-buchi"),
        }
    }
}

/// An objective kind together with its final-state set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub final_states: StateSet,
}

/// How Adam's observation partition relates to Eve's.
///
/// The classification reports the strongest applicable label: perfectly
/// informed implies more informed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoOrdering {
    /// Every Adam class is a singleton.
    AdamPerfect,
    /// Every Adam class is contained in some Eve class.
    AdamMoreInformed,
    /// Some Adam class crosses Eve classes; no decision procedure applies.
    Other,
}

/// One observation partition over the state space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Class membership sets, indexed by `ClassId`.
    pub classes: Vec<StateSet>,
    /// Class of each state.
    pub class_of: Vec<ClassId>,
}

impl Partition {
    /// Builds a partition from explicit classes; the caller has validated
    /// coverage and disjointness.
    fn new(classes: Vec<StateSet>, n_states: usize) -> Self {
        let mut class_of = vec![0; n_states];
        for (ci, c) in classes.iter().enumerate() {
            for s in c.iter() {
                class_of[s] = ci;
            }
        }
        Partition { classes, class_of }
    }

    /// The equality partition (every class a singleton).
    pub fn equality(n_states: usize) -> Self {
        let classes = (0..n_states).map(|s| StateSet::singleton(n_states, s)).collect();
        Partition::new(classes, n_states)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// An unvalidated arena description, as produced by the game-file parser or
/// built programmatically. Entry point for [`validate_arena`].
#[derive(Debug, Clone, Default)]
pub struct RawArena {
    pub states: Vec<String>,
    pub eve_actions: Vec<String>,
    pub adam_actions: Vec<String>,
    /// Sparse transition list: (state, eve action, adam action, successors).
    pub transitions: Vec<(String, String, String, Vec<(String, BigRational)>)>,
    /// Eve observation classes as lists of state names.
    pub eve_classes: Vec<Vec<String>>,
    /// Adam observation classes as lists of state names.
    pub adam_classes: Vec<Vec<String>>,
}

/// A single violation found while validating a raw arena.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("no states declared")]
    NoStates,
    #[error("no {player} actions declared")]
    NoActions { player: &'static str },
    #[error("duplicate {kind} identifier `{name}`")]
    DuplicateIdentifier { kind: &'static str, name: String },
    #[error("unknown state `{name}` in {context}")]
    UnknownState { name: String, context: String },
    #[error("unknown action `{name}` in transition ({from}, {eve}, {adam})")]
    UnknownAction { name: String, from: String, eve: String, adam: String },
    #[error("transition not total at ({from}, {eve}, {adam})")]
    MissingTransition { from: String, eve: String, adam: String },
    #[error("duplicate transition entry for ({from}, {eve}, {adam})")]
    DuplicateTransition { from: String, eve: String, adam: String },
    #[error("duplicate successor `{to}` in distribution at ({from}, {eve}, {adam})")]
    DuplicateSuccessor { from: String, eve: String, adam: String, to: String },
    #[error("probability {prob} outside (0,1] at ({from}, {eve}, {adam}) -> {to}")]
    ProbabilityOutOfRange { from: String, eve: String, adam: String, to: String, prob: String },
    #[error("distribution sums to {sum} at ({from}, {eve}, {adam})")]
    ProbabilitySum { from: String, eve: String, adam: String, sum: String },
    #[error("{player} partition: state `{name}` appears in more than one class")]
    OverlappingClasses { player: &'static str, name: String },
    #[error("{player} partition: state `{name}` not covered by any class")]
    UncoveredState { player: &'static str, name: String },
    #[error("{player} partition: class {index} is empty")]
    EmptyClass { player: &'static str, index: usize },
}

/// A validated concurrent arena with imperfect information.
///
/// Immutable after validation; safe to share across concurrent solver tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arena {
    pub states: Vec<String>,
    pub eve_actions: Vec<String>,
    pub adam_actions: Vec<String>,
    /// `transition[s][eve][adam]` is the successor distribution, sorted by
    /// state index; every listed probability is positive and the entries sum
    /// to one exactly.
    transition: Vec<Vec<Vec<Vec<(StateId, BigRational)>>>>,
    /// Supports of the distributions, as bit sets.
    support: Vec<Vec<Vec<StateSet>>>,
    pub eve_partition: Partition,
    pub adam_partition: Partition,
}

impl Arena {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_eve_actions(&self) -> usize {
        self.eve_actions.len()
    }

    pub fn n_adam_actions(&self) -> usize {
        self.adam_actions.len()
    }

    /// The successor distribution of `(s, eve, adam)`.
    pub fn distribution(&self, s: StateId, eve: ActionId, adam: ActionId) -> &[(StateId, BigRational)] {
        &self.transition[s][eve][adam]
    }

    /// States with positive probability under `(s, eve, adam)`; never empty.
    pub fn support(&self, s: StateId, eve: ActionId, adam: ActionId) -> &StateSet {
        &self.support[s][eve][adam]
    }

    /// All states reachable from `set` in one step, over every action pair.
    pub fn post_all(&self, set: &StateSet) -> StateSet {
        let mut out = StateSet::empty(self.n_states());
        for s in set.iter() {
            for eve in 0..self.n_eve_actions() {
                for adam in 0..self.n_adam_actions() {
                    out.union_with(self.support(s, eve, adam));
                }
            }
        }
        out
    }

    /// States reachable from `s` playing `eve` against any Adam action.
    pub fn post_eve(&self, s: StateId, eve: ActionId) -> StateSet {
        let mut out = StateSet::empty(self.n_states());
        for adam in 0..self.n_adam_actions() {
            out.union_with(self.support(s, eve, adam));
        }
        out
    }

    pub fn eve_class_of(&self, s: StateId) -> ClassId {
        self.eve_partition.class_of[s]
    }

    pub fn adam_class_of(&self, s: StateId) -> ClassId {
        self.adam_partition.class_of[s]
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|n| n == name)
    }

    pub fn eve_action_index(&self, name: &str) -> Option<ActionId> {
        self.eve_actions.iter().position(|n| n == name)
    }

    pub fn adam_action_index(&self, name: &str) -> Option<ActionId> {
        self.adam_actions.iter().position(|n| n == name)
    }

    /// Classifies how Adam is informed relative to Eve.
    pub fn info_ordering(&self) -> InfoOrdering {
        if self.adam_partition.classes.iter().all(|c| c.len() == 1) {
            return InfoOrdering::AdamPerfect;
        }
        let contained = self.adam_partition.classes.iter().all(|ac| {
            let rep = ac.first().expect("classes are non-empty");
            ac.is_subset(&self.eve_partition.classes[self.eve_partition.class_of[rep]])
        });
        if contained {
            InfoOrdering::AdamMoreInformed
        } else {
            InfoOrdering::Other
        }
    }

    /// Restricts the arena to the states reachable from `starts` under every
    /// action pair, returning the restriction and the map from new to old
    /// state indices. The reachable set is closed under supports, so the
    /// restriction is total and valid whenever the input is.
    pub fn restrict_to_reachable(&self, starts: &StateSet) -> (Arena, Vec<StateId>) {
        let mut reach = starts.clone();
        let mut frontier = starts.clone();
        while !frontier.is_empty() {
            let post = self.post_all(&frontier);
            frontier = post.difference(&reach);
            reach.union_with(&frontier);
        }
        let keep: Vec<StateId> = reach.iter().collect();
        let old_to_new: BTreeMap<StateId, StateId> =
            keep.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let n = keep.len();

        let mut raw = RawArena {
            states: keep.iter().map(|&s| self.states[s].clone()).collect(),
            eve_actions: self.eve_actions.clone(),
            adam_actions: self.adam_actions.clone(),
            ..RawArena::default()
        };
        for &s in &keep {
            for eve in 0..self.n_eve_actions() {
                for adam in 0..self.n_adam_actions() {
                    let dist = self
                        .distribution(s, eve, adam)
                        .iter()
                        .map(|(t, p)| (self.states[*t].clone(), p.clone()))
                        .collect();
                    raw.transitions.push((
                        self.states[s].clone(),
                        self.eve_actions[eve].clone(),
                        self.adam_actions[adam].clone(),
                        dist,
                    ));
                }
            }
        }
        for part in [&self.eve_partition, &self.adam_partition] {
            let classes: Vec<Vec<String>> = part
                .classes
                .iter()
                .filter_map(|c| {
                    let members: Vec<String> = c
                        .iter()
                        .filter(|s| old_to_new.contains_key(s))
                        .map(|s| self.states[s].clone())
                        .collect();
                    (!members.is_empty()).then_some(members)
                })
                .collect();
            if std::ptr::eq(part, &self.eve_partition) {
                raw.eve_classes = classes;
            } else {
                raw.adam_classes = classes;
            }
        }
        let arena = validate_arena(&raw).expect("restriction of a valid arena is valid");
        debug_assert_eq!(arena.n_states(), n);
        (arena, keep)
    }
}

/// Validates a raw description, returning either the arena or the complete
/// list of violations found.
pub fn validate_arena(raw: &RawArena) -> Result<Arena, Vec<ValidationError>> {
    let mut errors = Vec::new();

    if raw.states.is_empty() {
        errors.push(ValidationError::NoStates);
    }
    if raw.eve_actions.is_empty() {
        errors.push(ValidationError::NoActions { player: "eve" });
    }
    if raw.adam_actions.is_empty() {
        errors.push(ValidationError::NoActions { player: "adam" });
    }

    let mut state_index: BTreeMap<&str, StateId> = BTreeMap::new();
    for (i, name) in raw.states.iter().enumerate() {
        if state_index.insert(name, i).is_some() {
            errors.push(ValidationError::DuplicateIdentifier { kind: "state", name: name.clone() });
        }
    }
    let mut index_of = |names: &[String], kind: &'static str, errors: &mut Vec<ValidationError>| {
        let mut map: BTreeMap<String, ActionId> = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if map.insert(name.clone(), i).is_some() {
                errors.push(ValidationError::DuplicateIdentifier { kind, name: name.clone() });
            }
        }
        map
    };
    let eve_index = index_of(&raw.eve_actions, "eve action", &mut errors);
    let adam_index = index_of(&raw.adam_actions, "adam action", &mut errors);

    if !errors.is_empty() {
        return Err(errors);
    }

    let n = raw.states.len();
    let ne = raw.eve_actions.len();
    let na = raw.adam_actions.len();

    let mut transition: Vec<Vec<Vec<Option<Vec<(StateId, BigRational)>>>>> =
        vec![vec![vec![None; na]; ne]; n];

    for (from, eve, adam, dist) in &raw.transitions {
        let (Some(&s), Some(&e), Some(&a)) = (
            state_index.get(from.as_str()),
            eve_index.get(eve.as_str()),
            adam_index.get(adam.as_str()),
        ) else {
            if !state_index.contains_key(from.as_str()) {
                errors.push(ValidationError::UnknownState {
                    name: from.clone(),
                    context: format!("transition ({from}, {eve}, {adam})"),
                });
            }
            for (name, present) in [
                (eve, eve_index.contains_key(eve.as_str())),
                (adam, adam_index.contains_key(adam.as_str())),
            ] {
                if !present {
                    errors.push(ValidationError::UnknownAction {
                        name: name.clone(),
                        from: from.clone(),
                        eve: eve.clone(),
                        adam: adam.clone(),
                    });
                }
            }
            continue;
        };

        let mut entries: Vec<(StateId, BigRational)> = Vec::with_capacity(dist.len());
        let mut sum = BigRational::zero();
        let mut bad = false;
        for (to, prob) in dist {
            let Some(&t) = state_index.get(to.as_str()) else {
                errors.push(ValidationError::UnknownState {
                    name: to.clone(),
                    context: format!("distribution at ({from}, {eve}, {adam})"),
                });
                bad = true;
                continue;
            };
            if entries.iter().any(|(u, _)| *u == t) {
                errors.push(ValidationError::DuplicateSuccessor {
                    from: from.clone(),
                    eve: eve.clone(),
                    adam: adam.clone(),
                    to: to.clone(),
                });
                bad = true;
                continue;
            }
            if *prob <= BigRational::zero() || *prob > BigRational::one() {
                errors.push(ValidationError::ProbabilityOutOfRange {
                    from: from.clone(),
                    eve: eve.clone(),
                    adam: adam.clone(),
                    to: to.clone(),
                    prob: prob.to_string(),
                });
                bad = true;
            }
            sum += prob;
            entries.push((t, prob.clone()));
        }
        if !bad && !sum.is_one() {
            errors.push(ValidationError::ProbabilitySum {
                from: from.clone(),
                eve: eve.clone(),
                adam: adam.clone(),
                sum: sum.to_string(),
            });
            bad = true;
        }
        if transition[s][e][a].is_some() {
            errors.push(ValidationError::DuplicateTransition {
                from: from.clone(),
                eve: eve.clone(),
                adam: adam.clone(),
            });
            continue;
        }
        if !bad {
            entries.sort_by_key(|(t, _)| *t);
            transition[s][e][a] = Some(entries);
        } else {
            // Keep a placeholder so missing-transition errors are not also
            // reported for a triple that already failed.
            transition[s][e][a] = Some(Vec::new());
        }
    }

    for s in 0..n {
        for e in 0..ne {
            for a in 0..na {
                if transition[s][e][a].is_none() {
                    errors.push(ValidationError::MissingTransition {
                        from: raw.states[s].clone(),
                        eve: raw.eve_actions[e].clone(),
                        adam: raw.adam_actions[a].clone(),
                    });
                }
            }
        }
    }

    let mut build_partition = |classes: &[Vec<String>],
                               player: &'static str,
                               errors: &mut Vec<ValidationError>|
     -> Vec<StateSet> {
        let mut seen = StateSet::empty(n);
        let mut out = Vec::with_capacity(classes.len());
        for (ci, class) in classes.iter().enumerate() {
            let mut set = StateSet::empty(n);
            for name in class {
                match state_index.get(name.as_str()) {
                    Some(&s) => {
                        if seen.contains(s) {
                            errors.push(ValidationError::OverlappingClasses {
                                player,
                                name: name.clone(),
                            });
                        }
                        seen.insert(s);
                        set.insert(s);
                    }
                    None => errors.push(ValidationError::UnknownState {
                        name: name.clone(),
                        context: format!("{player} partition"),
                    }),
                }
            }
            if set.is_empty() {
                errors.push(ValidationError::EmptyClass { player, index: ci });
            }
            out.push(set);
        }
        for s in 0..n {
            if !seen.contains(s) {
                errors.push(ValidationError::UncoveredState { player, name: raw.states[s].clone() });
            }
        }
        out
    };
    let eve_classes = build_partition(&raw.eve_classes, "eve", &mut errors);
    let adam_classes = build_partition(&raw.adam_classes, "adam", &mut errors);

    if !errors.is_empty() {
        return Err(errors);
    }

    let transition: Vec<Vec<Vec<Vec<(StateId, BigRational)>>>> = transition
        .into_iter()
        .map(|per_s| per_s.into_iter().map(|per_e| per_e.into_iter().map(Option::unwrap).collect()).collect())
        .collect();
    let support = transition
        .iter()
        .map(|per_s| {
            per_s
                .iter()
                .map(|per_e| {
                    per_e
                        .iter()
                        .map(|dist| StateSet::from_iter(n, dist.iter().map(|(t, _)| *t)))
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(Arena {
        states: raw.states.clone(),
        eve_actions: raw.eve_actions.clone(),
        adam_actions: raw.adam_actions.clone(),
        transition,
        support,
        eve_partition: Partition::new(eve_classes, n),
        adam_partition: Partition::new(adam_classes, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn ratio(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    /// Two states, one action each, a 1/2-1/2 split from `s`.
    fn tiny_raw() -> RawArena {
        RawArena {
            states: vec!["s".into(), "t".into()],
            eve_actions: vec!["a".into()],
            adam_actions: vec!["b".into()],
            transitions: vec![
                ("s".into(), "a".into(), "b".into(), vec![("s".into(), ratio(1, 2)), ("t".into(), ratio(1, 2))]),
                ("t".into(), "a".into(), "b".into(), vec![("t".into(), ratio(1, 1))]),
            ],
            eve_classes: vec![vec!["s".into()], vec!["t".into()]],
            adam_classes: vec![vec!["s".into()], vec!["t".into()]],
        }
    }

    #[test]
    fn valid_arena_accepted() {
        let arena = validate_arena(&tiny_raw()).unwrap();
        assert_eq!(arena.n_states(), 2);
        assert_eq!(arena.support(0, 0, 0).iter().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(arena.info_ordering(), InfoOrdering::AdamPerfect);
    }

    #[test]
    fn missing_transition_reported() {
        let mut raw = tiny_raw();
        raw.transitions.pop();
        let errs = validate_arena(&raw).unwrap_err();
        assert!(errs.iter().any(|e| matches!(
            e,
            ValidationError::MissingTransition { from, .. } if from == "t"
        )));
    }

    #[test]
    fn bad_probability_sum_reported() {
        let mut raw = tiny_raw();
        raw.transitions[0].3 = vec![("s".into(), ratio(1, 3)), ("t".into(), ratio(1, 3))];
        let errs = validate_arena(&raw).unwrap_err();
        assert!(errs.iter().any(|e| matches!(
            e,
            ValidationError::ProbabilitySum { sum, .. } if sum == "2/3"
        )));
    }

    #[test]
    fn zero_probability_rejected() {
        let mut raw = tiny_raw();
        raw.transitions[1].3 = vec![("t".into(), ratio(1, 1)), ("s".into(), ratio(0, 1))];
        let errs = validate_arena(&raw).unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, ValidationError::ProbabilityOutOfRange { .. })));
    }

    #[test]
    fn partition_defects_reported() {
        let mut raw = tiny_raw();
        raw.eve_classes = vec![vec!["s".into(), "t".into()], vec!["t".into()]];
        let errs = validate_arena(&raw).unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, ValidationError::OverlappingClasses { .. })));

        let mut raw = tiny_raw();
        raw.adam_classes = vec![vec!["s".into()]];
        let errs = validate_arena(&raw).unwrap_err();
        assert!(errs.iter().any(|e| matches!(
            e,
            ValidationError::UncoveredState { player: "adam", .. }
        )));
    }

    #[test]
    fn info_ordering_classification() {
        // Adam classes equal to Eve's non-trivial classes: more informed.
        let mut raw = tiny_raw();
        raw.eve_classes = vec![vec!["s".into(), "t".into()]];
        raw.adam_classes = vec![vec!["s".into(), "t".into()]];
        let arena = validate_arena(&raw).unwrap();
        assert_eq!(arena.info_ordering(), InfoOrdering::AdamMoreInformed);

        // Adam class crossing Eve classes: no ordering.
        let mut raw = tiny_raw();
        raw.adam_classes = vec![vec!["s".into(), "t".into()]];
        let arena = validate_arena(&raw).unwrap();
        assert_eq!(arena.info_ordering(), InfoOrdering::Other);
    }
}
