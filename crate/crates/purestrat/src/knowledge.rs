//! Eve's belief tracking and constraint automata over her observations.
//!
//! A [`Knowledge`] is the set of states consistent with Eve's observation
//! history and her own actions; it always sits inside a single Eve class.
//! [`update_knowledge`] advances it on an action and an observed class. The
//! update can legitimately come out empty: that observation is impossible
//! under the chosen action, and it never occurs along an actual play.
//!
//! A [`ConstraintAutomaton`] is a deterministic machine over (Eve action,
//! Eve class) letters that restricts which actions Eve may play. A strategy
//! is compatible with the automaton when the prescribed action is always
//! admitted along every consistent play. Edges for an allowed action paired
//! with an impossible observation are routed to the sink; no consistent play
//! takes them.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::arena::{ActionId, Arena, ClassId, StateId};
use crate::bitset::StateSet;
use crate::strategy::FiniteMemoryStrategy;

/// A non-empty set of states contained in one Eve observation class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Knowledge {
    set: StateSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("knowledge must be non-empty")]
    Empty,
    #[error("knowledge mixes states from different eve classes")]
    MixedClasses,
}

impl Knowledge {
    pub fn new(arena: &Arena, set: StateSet) -> Result<Self, KnowledgeError> {
        let Some(rep) = set.first() else {
            return Err(KnowledgeError::Empty);
        };
        let class = arena.eve_class_of(rep);
        if !set.is_subset(&arena.eve_partition.classes[class]) {
            return Err(KnowledgeError::MixedClasses);
        }
        Ok(Knowledge { set })
    }

    pub fn from_states(arena: &Arena, states: &[StateId]) -> Result<Self, KnowledgeError> {
        Ok(Self::new(arena, StateSet::from_iter(arena.n_states(), states.iter().copied()))?)
    }

    pub fn set(&self) -> &StateSet {
        &self.set
    }

    pub fn class(&self, arena: &Arena) -> ClassId {
        arena.eve_class_of(self.set.first().expect("knowledge is non-empty"))
    }
}

/// Eve's knowledge update: the states of the observed class reachable from
/// the current knowledge under her action and some Adam action. The result is
/// a subset of the class and may be empty.
pub fn update_knowledge(arena: &Arena, k: &StateSet, eve: ActionId, class: ClassId) -> StateSet {
    let mut post = StateSet::empty(arena.n_states());
    for r in k.iter() {
        post.union_with(&arena.post_eve(r, eve));
    }
    post.intersect_with(&arena.eve_partition.classes[class]);
    post
}

/// Index of a constraint-automaton state.
pub type AutState = usize;

/// A deterministic automaton restricting Eve's admissible actions.
///
/// Invariants: `act(q)` is empty exactly at the sink; a disallowed action
/// always leads to the sink; the sink is absorbing. An allowed action may
/// also lead to the sink when the paired observation is impossible from the
/// state's knowledge; such edges are unreachable along consistent plays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintAutomaton {
    pub initial: AutState,
    pub sink: AutState,
    /// `trans[q][eve_action][eve_class]`.
    pub trans: Vec<Vec<Vec<AutState>>>,
    /// Admissible actions per state, sorted.
    pub act: Vec<Vec<ActionId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomatonError {
    #[error("act must be empty exactly at the sink (state {state})")]
    ActEmptinessMismatch { state: AutState },
    #[error("disallowed action {action} does not lead to the sink from state {state}")]
    DisallowedNotSink { state: AutState, action: ActionId },
    #[error("sink state is not absorbing")]
    SinkNotAbsorbing,
    #[error("transition tables are not total")]
    NotTotal,
}

impl ConstraintAutomaton {
    pub fn n_states(&self) -> usize {
        self.trans.len()
    }

    pub fn allows(&self, q: AutState, action: ActionId) -> bool {
        self.act[q].binary_search(&action).is_ok()
    }

    pub fn step(&self, q: AutState, action: ActionId, class: ClassId) -> AutState {
        self.trans[q][action][class]
    }

    /// Checks the structural invariants listed on the type.
    pub fn validate(&self, n_actions: usize, n_classes: usize) -> Result<(), AutomatonError> {
        let n = self.n_states();
        if self.initial >= n || self.sink >= n || self.act.len() != n {
            return Err(AutomatonError::NotTotal);
        }
        for q in 0..n {
            if self.trans[q].len() != n_actions
                || self.trans[q].iter().any(|per_class| per_class.len() != n_classes)
            {
                return Err(AutomatonError::NotTotal);
            }
            if self.act[q].is_empty() != (q == self.sink) {
                return Err(AutomatonError::ActEmptinessMismatch { state: q });
            }
            for action in 0..n_actions {
                for class in 0..n_classes {
                    let target = self.trans[q][action][class];
                    if target >= n {
                        return Err(AutomatonError::NotTotal);
                    }
                    if !self.allows(q, action) && target != self.sink {
                        return Err(AutomatonError::DisallowedNotSink { state: q, action });
                    }
                    if q == self.sink && target != self.sink {
                        return Err(AutomatonError::SinkNotAbsorbing);
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs the automaton on a word of (action, observed class) letters.
    pub fn run(&self, word: &[(ActionId, ClassId)]) -> AutState {
        word.iter().fold(self.initial, |q, &(a, x)| self.step(q, a, x))
    }
}

/// Runs `automaton` on `word`, starting at the initial state.
pub fn run_automaton(automaton: &ConstraintAutomaton, word: &[(ActionId, ClassId)]) -> AutState {
    automaton.run(word)
}

/// The automaton that admits every action: one live state plus an
/// unreachable sink. Every strategy is compatible with it.
pub fn trivial_automaton(arena: &Arena) -> ConstraintAutomaton {
    let ne = arena.n_eve_actions();
    let nc = arena.eve_partition.len();
    ConstraintAutomaton {
        initial: 0,
        sink: 1,
        trans: vec![vec![vec![0; nc]; ne], vec![vec![1; nc]; ne]],
        act: vec![(0..ne).collect(), Vec::new()],
    }
}

/// A constraint automaton whose compatible strategies are exactly those
/// keeping Eve's knowledge inside `family`, built from the start knowledge
/// `k0`.
///
/// Automaton states are the members of `family` reachable from `k0` by
/// knowledge updates (plus a sink); membership in `family` is tested on the
/// full family. If `k0` is not in `family` the automaton starts in the sink
/// and no strategy is compatible.
pub struct KnowledgeAutomaton {
    pub automaton: ConstraintAutomaton,
    /// Knowledge carried by each live automaton state.
    pub knowledge_of: Vec<Option<StateSet>>,
}

pub fn knowledge_automaton(
    arena: &Arena,
    family: &[StateSet],
    k0: &StateSet,
) -> KnowledgeAutomaton {
    let ne = arena.n_eve_actions();
    let nc = arena.eve_partition.len();
    let in_family: std::collections::HashSet<&StateSet> = family.iter().collect();

    if !in_family.contains(k0) {
        let automaton = ConstraintAutomaton {
            initial: 0,
            sink: 0,
            trans: vec![vec![vec![0; nc]; ne]],
            act: vec![Vec::new()],
        };
        return KnowledgeAutomaton { automaton, knowledge_of: vec![None] };
    }

    // Materialize the members of `family` reachable from k0 under any action,
    // before filtering transitions through act.
    let mut index: HashMap<StateSet, AutState> = HashMap::new();
    let mut states: Vec<StateSet> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(k0.clone(), 0);
    states.push(k0.clone());
    queue.push_back(0);
    while let Some(qi) = queue.pop_front() {
        let k = states[qi].clone();
        for eve in 0..ne {
            for class in 0..nc {
                let next = update_knowledge(arena, &k, eve, class);
                if next.is_empty() || !in_family.contains(&next) || index.contains_key(&next) {
                    continue;
                }
                let id = states.len();
                index.insert(next.clone(), id);
                states.push(next);
                queue.push_back(id);
            }
        }
    }

    let sink = states.len();
    let n = sink + 1;
    let mut trans = vec![vec![vec![sink; nc]; ne]; n];
    let mut act: Vec<Vec<ActionId>> = vec![Vec::new(); n];

    for (qi, k) in states.iter().enumerate() {
        for eve in 0..ne {
            let updates: Vec<StateSet> =
                (0..nc).map(|class| update_knowledge(arena, k, eve, class)).collect();
            let allowed = updates.iter().all(|u| u.is_empty() || in_family.contains(u));
            if allowed {
                act[qi].push(eve);
                for (class, u) in updates.iter().enumerate() {
                    if !u.is_empty() {
                        trans[qi][eve][class] = index[u];
                    }
                    // Empty update: impossible observation, stays routed to
                    // the sink as an unreachable edge.
                }
            }
        }
    }

    let mut knowledge_of: Vec<Option<StateSet>> = states.into_iter().map(Some).collect();
    knowledge_of.push(None);

    let automaton = ConstraintAutomaton { initial: 0, sink, trans, act };
    debug_assert!(automaton.validate(ne, nc).is_ok());
    KnowledgeAutomaton { automaton, knowledge_of }
}

/// Checks that `strategy`, played from any state of `starts`, prescribes an
/// admitted action along every consistent play of at most `horizon` steps.
///
/// The walk explores (arena state, strategy memory, automaton state) triples
/// through the support relation; once every reachable triple has been seen
/// the check is exhaustive, which a horizon of at least
/// `|S| * |M| * |Q|` guarantees.
pub fn is_t_compatible(
    arena: &Arena,
    automaton: &ConstraintAutomaton,
    strategy: &FiniteMemoryStrategy,
    horizon: usize,
    starts: &StateSet,
) -> bool {
    let mut seen = std::collections::HashSet::new();
    let mut frontier: Vec<(StateId, usize, AutState)> = starts
        .iter()
        .map(|s| (s, strategy.machine.initial, automaton.initial))
        .collect();
    frontier.retain(|t| seen.insert(*t));

    for _ in 0..=horizon {
        if frontier.is_empty() {
            return true;
        }
        let mut next_frontier = Vec::new();
        for (s, m, q) in frontier {
            let action = strategy.machine.output[m];
            if !automaton.allows(q, action) {
                return false;
            }
            for adam in 0..arena.n_adam_actions() {
                for t in arena.support(s, action, adam).iter() {
                    let class = arena.eve_class_of(t);
                    let triple = (
                        t,
                        strategy.machine.update[m][class],
                        automaton.step(q, action, class),
                    );
                    if seen.insert(triple) {
                        next_frontier.push(triple);
                    }
                }
            }
        }
        frontier = next_frontier;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::corpus;
    use crate::strategy::MooreMachine;

    fn fig2a() -> Arena {
        corpus::corpus_arena("fig2a").unwrap().0
    }

    #[test]
    fn fig2a_knowledge_sequence() {
        let arena = fig2a();
        let q0 = arena.state_index("q0").unwrap();
        let q1 = arena.state_index("q1").unwrap();
        let a = arena.eve_action_index("a").unwrap();
        let b = arena.eve_action_index("b").unwrap();
        let class = arena.eve_class_of(q0);
        assert_eq!(class, arena.eve_class_of(q1), "all states are eve-equivalent");

        let k0 = StateSet::from_iter(2, [q0, q1]);
        let k1 = update_knowledge(&arena, &k0, a, class);
        assert_eq!(k1, StateSet::singleton(2, q1));
        let k2 = update_knowledge(&arena, &k1, b, class);
        assert_eq!(k2, StateSet::singleton(2, q0));
        let k3 = update_knowledge(&arena, &k2, b, class);
        assert_eq!(k3, k0);
    }

    #[test]
    fn update_on_absorbing_singleton() {
        let arena = corpus::corpus_arena("example2").unwrap().0;
        let qf = arena.state_index("q_f").unwrap();
        let k = StateSet::singleton(2, qf);
        let class = arena.eve_class_of(qf);
        for eve in 0..arena.n_eve_actions() {
            assert_eq!(update_knowledge(&arena, &k, eve, class), k);
        }
    }

    #[test]
    fn fig1_update_from_full_middle_class() {
        let arena = corpus::corpus_arena("fig1").unwrap().0;
        let ids: Vec<_> = ["s1", "s2", "s3", "s4"]
            .iter()
            .map(|n| arena.state_index(n).unwrap())
            .collect();
        let k = StateSet::from_iter(arena.n_states(), ids.iter().copied());
        let a = arena.eve_action_index("a").unwrap();
        let class = arena.eve_class_of(ids[0]);
        let expected = StateSet::from_iter(
            arena.n_states(),
            [arena.state_index("s2").unwrap(), arena.state_index("s3").unwrap()],
        );
        assert_eq!(update_knowledge(&arena, &k, a, class), expected);
    }

    #[test]
    fn trivial_automaton_allows_everything() {
        let arena = fig2a();
        let t = trivial_automaton(&arena);
        t.validate(arena.n_eve_actions(), arena.eve_partition.len()).unwrap();
        assert_eq!(run_automaton(&t, &[]), 0);
        assert_eq!(run_automaton(&t, &[(0, 0), (1, 0), (0, 0)]), 0);

        let any = FiniteMemoryStrategy {
            machine: MooreMachine::constant(0, arena.eve_partition.len()),
        };
        let starts = StateSet::full(arena.n_states());
        assert!(is_t_compatible(&arena, &t, &any, 100, &starts));
    }

    #[test]
    fn knowledge_automaton_restricts_actions() {
        // Family {{q0,q1},{q1}} on fig2a: b is excluded at {q1} because the
        // update under b lands on {q0}, outside the family.
        let arena = fig2a();
        let q0 = arena.state_index("q0").unwrap();
        let q1 = arena.state_index("q1").unwrap();
        let b = arena.eve_action_index("b").unwrap();
        let full = StateSet::from_iter(2, [q0, q1]);
        let only_q1 = StateSet::singleton(2, q1);
        let family = vec![full.clone(), only_q1.clone()];

        let ka = knowledge_automaton(&arena, &family, &full);
        ka.automaton
            .validate(arena.n_eve_actions(), arena.eve_partition.len())
            .unwrap();
        let q1_state = ka
            .knowledge_of
            .iter()
            .position(|k| k.as_ref() == Some(&only_q1))
            .expect("{q1} is reachable from {q0,q1} via a");
        assert!(!ka.automaton.allows(q1_state, b));
    }

    #[test]
    fn empty_family_starts_in_sink() {
        let arena = fig2a();
        let k0 = StateSet::from_iter(2, [0, 1]);
        let ka = knowledge_automaton(&arena, &[], &k0);
        assert_eq!(ka.automaton.initial, ka.automaton.sink);
        assert!(ka.automaton.act[ka.automaton.initial].is_empty());
    }

    #[test]
    fn incompatible_first_action_detected() {
        let arena = fig2a();
        let q1 = arena.state_index("q1").unwrap();
        let b = arena.eve_action_index("b").unwrap();
        let only_q1 = StateSet::singleton(2, q1);
        let family = vec![only_q1.clone()];
        let ka = knowledge_automaton(&arena, &family, &only_q1);

        // b is disallowed at {q1}; a constant-b strategy violates at step 0.
        let plays_b = FiniteMemoryStrategy {
            machine: MooreMachine::constant(b, arena.eve_partition.len()),
        };
        assert!(!is_t_compatible(&arena, &ka.automaton, &plays_b, 10, &only_q1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random small arenas for property tests: 2-4 states, 2 actions,
        /// random supports with equal weights.
        pub fn arb_arena() -> impl Strategy<Value = Arena> {
            (2usize..=4, any::<u64>()).prop_map(|(n, seed)| {
                use num_bigint::BigInt;
                use num_rational::BigRational;
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
                let mut transitions = Vec::new();
                for s in 0..n {
                    for e in ["a", "b"] {
                        for x in ["x", "y"] {
                            let mut succ: Vec<usize> =
                                (0..n).filter(|_| rng.gen_bool(0.4)).collect();
                            if succ.is_empty() {
                                succ.push(rng.gen_range(0..n));
                            }
                            let w = succ.len() as i64;
                            let dist = succ
                                .iter()
                                .map(|&t| {
                                    (states[t].clone(), BigRational::new(BigInt::from(1), BigInt::from(w)))
                                })
                                .collect();
                            transitions.push((states[s].clone(), e.into(), x.into(), dist));
                        }
                    }
                }
                // Eve partition: split at a random point; Adam perfectly informed.
                let cut = rng.gen_range(1..=n - 1);
                let eve_classes = vec![
                    states[..cut].to_vec(),
                    states[cut..].to_vec(),
                ];
                let adam_classes = states.iter().map(|s| vec![s.clone()]).collect();
                crate::arena::validate_arena(&crate::arena::RawArena {
                    states,
                    eve_actions: vec!["a".into(), "b".into()],
                    adam_actions: vec!["x".into(), "y".into()],
                    transitions,
                    eve_classes,
                    adam_classes,
                })
                .unwrap()
            })
        }

        proptest! {
            /// Knowledge updates are monotone in the knowledge argument.
            #[test]
            fn update_monotone(arena in arb_arena(), bits in any::<u32>()) {
                let n = arena.n_states();
                for class in 0..arena.eve_partition.len() {
                    let big = arena.eve_partition.classes[class].clone();
                    let small = StateSet::from_iter(
                        n,
                        big.iter().filter(|s| bits & (1 << (s % 32)) != 0),
                    );
                    for eve in 0..arena.n_eve_actions() {
                        for target in 0..arena.eve_partition.len() {
                            let u_small = update_knowledge(&arena, &small, eve, target);
                            let u_big = update_knowledge(&arena, &big, eve, target);
                            prop_assert!(u_small.is_subset(&u_big));
                            prop_assert!(u_big.is_subset(&arena.eve_partition.classes[target]));
                        }
                    }
                }
            }
        }
    }
}
