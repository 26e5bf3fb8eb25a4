//! Pure positive winning for reachability, with and without a constraint
//! automaton, and extraction of finite-memory witness strategies.
//!
//! The central object is the [`RankedFamily`]: the limit of the increasing
//! family of winning state sets for bounded-horizon positive reachability
//! against a perfectly informed adversary. A set belongs to the family when
//! every per-class fragment of it does, so the family is stored as one ranked
//! map of fragments per Eve class; subsets of the final set have rank zero
//! implicitly.
//!
//! A fragment acquires rank `n` when some action and some already-ranked
//! witness set hit the support of every (state, adversary action) pair of the
//! fragment. Witness sets combine one fragment per class plus final states;
//! the search walks carrier states per requirement instead of enumerating
//! whole witness sets, which is equivalent under downward closure of the
//! family and exponentially cheaper.
//!
//! Constraint-automaton solving follows a three-stage reduction: embed the
//! automaton into the arena, carve out the largest knowledge region in which
//! Eve can surely keep the automaton away from its sink, package that region
//! as a knowledge automaton, embed it again, and decide plain positive
//! reachability there. When the adversary is only more informed (not
//! perfect), an indistinguishable-subset construction first reduces to the
//! perfect case.

use std::collections::{HashMap, HashSet, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::arena::{ActionId, Arena, ClassId, InfoOrdering, RawArena, StateId};
use crate::bitset::StateSet;
use crate::knowledge::{update_knowledge, AutState, ConstraintAutomaton, Knowledge};
use crate::strategy::{FiniteMemoryStrategy, MooreMachine};

/// Rank and stored witness of one ranked fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentInfo {
    /// Smallest horizon within which the fragment positively reaches.
    pub rank: u32,
    /// The action realizing the inductive step.
    pub witness_action: ActionId,
    /// The witness set of rank below `rank` hit by every support.
    pub witness_set: StateSet,
}

/// The limit family of positively winning sets, organized per Eve class.
///
/// Invariants: a set has rank 0 exactly when it lies inside the final set;
/// the stored fragments are downward closed per class with monotone ranks;
/// a fragment of rank `n > 0` carries a witness whose own rank is below `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedFamily {
    final_states: StateSet,
    per_class: Vec<HashMap<StateSet, FragmentInfo>>,
}

impl RankedFamily {
    pub fn final_states(&self) -> &StateSet {
        &self.final_states
    }

    /// Rank of an arbitrary state set: zero inside the final set, otherwise
    /// the maximum of its per-class fragment ranks; `None` when some
    /// fragment is not winning.
    pub fn rank_of(&self, arena: &Arena, set: &StateSet) -> Option<u32> {
        if set.is_subset(&self.final_states) {
            return Some(0);
        }
        let mut rank = 0;
        for (class_id, class) in arena.eve_partition.classes.iter().enumerate() {
            let fragment = set.intersection(class).difference(&self.final_states);
            if fragment.is_empty() {
                continue;
            }
            rank = rank.max(self.per_class[class_id].get(&fragment)?.rank);
        }
        Some(rank)
    }

    pub fn contains(&self, arena: &Arena, set: &StateSet) -> bool {
        self.rank_of(arena, set).is_some()
    }

    /// Largest stored rank, 0 when nothing beyond the final set is winning.
    pub fn max_rank(&self) -> u32 {
        self.per_class
            .iter()
            .flat_map(|m| m.values().map(|i| i.rank))
            .max()
            .unwrap_or(0)
    }

    /// Checks downward closure over all stored fragments: every non-empty
    /// subset of a stored fragment is stored with a rank no larger.
    pub fn assert_downward_closed(&self) {
        for per_class in &self.per_class {
            for (fragment, info) in per_class {
                for subset in fragment.subsets() {
                    if subset.is_empty() || subset == *fragment {
                        continue;
                    }
                    let sub = per_class
                        .get(&subset)
                        .unwrap_or_else(|| panic!("family not downward closed at {subset:?}"));
                    assert!(
                        sub.rank <= info.rank,
                        "rank not monotone: {subset:?} has rank {} above {} of {fragment:?}",
                        sub.rank,
                        info.rank
                    );
                }
            }
        }
    }

    fn fragment_info(&self, class: ClassId, fragment: &StateSet) -> Option<&FragmentInfo> {
        self.per_class[class].get(fragment)
    }
}

/// Computes the limit family with minimal ranks for reachability to `f`.
///
/// A non-empty intra-class knowledge is positively winning against a
/// perfectly informed adversary exactly when it is in the family.
pub fn reach_fixpoint(arena: &Arena, f: &StateSet) -> RankedFamily {
    let mut family = RankedFamily {
        final_states: f.clone(),
        per_class: vec![HashMap::new(); arena.eve_partition.len()],
    };

    // Per class, the candidate fragments: non-empty subsets of class∖F.
    let candidates: Vec<Vec<StateSet>> = arena
        .eve_partition
        .classes
        .iter()
        .map(|class| {
            class
                .difference(f)
                .subsets()
                .into_iter()
                .filter(|c| !c.is_empty())
                .collect()
        })
        .collect();

    let mut level: u32 = 1;
    loop {
        let mut added: Vec<(ClassId, StateSet, FragmentInfo)> = Vec::new();
        for (class_id, frags) in candidates.iter().enumerate() {
            for fragment in frags {
                if family.per_class[class_id].contains_key(fragment) {
                    continue;
                }
                if let Some((action, witness)) = find_witness(arena, f, &family, fragment) {
                    added.push((
                        class_id,
                        fragment.clone(),
                        FragmentInfo { rank: level, witness_action: action, witness_set: witness },
                    ));
                }
            }
        }
        if added.is_empty() {
            return family;
        }
        for (class_id, fragment, info) in added {
            family.per_class[class_id].insert(fragment, info);
        }
        level += 1;
    }
}

/// Searches an action and a witness set already in the family whose union
/// with the final states hits `support(s, action, adversary)` for every
/// state of the fragment and every adversary action.
///
/// The witness is assembled by assigning one carrier state per requirement
/// and checking that the carriers grouped per class stay inside the family;
/// by downward closure this finds a witness exactly when one exists.
/// Actions and carriers are tried in index order, so witnesses are
/// deterministic.
fn find_witness(
    arena: &Arena,
    f: &StateSet,
    family: &RankedFamily,
    fragment: &StateSet,
) -> Option<(ActionId, StateSet)> {
    for action in 0..arena.n_eve_actions() {
        let mut requirements: Vec<StateSet> = Vec::new();
        let mut seen = HashSet::new();
        for s in fragment.iter() {
            for adversary in 0..arena.n_adam_actions() {
                let support = arena.support(s, action, adversary);
                if support.intersects(f) {
                    continue; // discharged by the final part of the witness
                }
                if seen.insert(support.clone()) {
                    requirements.push(support.clone());
                }
            }
        }
        let mut groups: Vec<StateSet> =
            vec![StateSet::empty(arena.n_states()); arena.eve_partition.len()];
        if assign_carriers(arena, family, &requirements, 0, &mut groups) {
            let mut witness = f.clone();
            for g in &groups {
                witness.union_with(g);
            }
            return Some((action, witness));
        }
    }
    None
}

fn assign_carriers(
    arena: &Arena,
    family: &RankedFamily,
    requirements: &[StateSet],
    index: usize,
    groups: &mut [StateSet],
) -> bool {
    let Some(requirement) = requirements.get(index) else {
        return true;
    };
    for carrier in requirement.iter() {
        let class = arena.eve_class_of(carrier);
        if groups[class].contains(carrier) {
            // Already carried for an earlier requirement.
            if assign_carriers(arena, family, requirements, index + 1, groups) {
                return true;
            }
            continue;
        }
        groups[class].insert(carrier);
        // Growing a group only shrinks the admissible witnesses, so a failed
        // membership check prunes the whole branch.
        if family.fragment_info(class, &groups[class]).is_some()
            && assign_carriers(arena, family, requirements, index + 1, groups)
        {
            return true;
        }
        groups[class].remove(carrier);
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("start knowledge is not positively winning")]
    NotWinning,
    #[error("no decision procedure for information ordering {0:?}")]
    Unsupported(InfoOrdering),
}

/// Builds the rank strategy for a winning knowledge: memory states are
/// witness sets of the family paired with the observed class, plus a single
/// dead memory emitting the first action. At a live memory the strategy
/// plays the fragment's witness action and moves to its witness set; the
/// play then reaches the final set with positive probability within
/// `rank(start)` steps.
pub fn strategy_from_ranks(
    arena: &Arena,
    family: &RankedFamily,
    start: &Knowledge,
) -> Result<FiniteMemoryStrategy, SolveError> {
    if !family.contains(arena, start.set()) {
        return Err(SolveError::NotWinning);
    }
    let n_classes = arena.eve_partition.len();

    // Memory 0 is the dead state: first action, self-loop.
    let mut output: Vec<ActionId> = vec![0];
    let mut update: Vec<Vec<usize>> = vec![vec![0; n_classes]];
    let mut index: HashMap<(StateSet, ClassId), usize> = HashMap::new();
    let mut queue: VecDeque<(StateSet, ClassId)> = VecDeque::new();

    let start_node = (start.set().clone(), start.class(arena));
    index.insert(start_node.clone(), 1);
    output.push(0);
    update.push(vec![0; n_classes]);
    queue.push_back(start_node);

    while let Some((set, class)) = queue.pop_front() {
        let m = index[&(set.clone(), class)];
        let fragment = set
            .intersection(&arena.eve_partition.classes[class])
            .difference(&family.final_states);
        if fragment.is_empty() {
            // Either the final set was hit or the observation left the
            // witness set; nothing remains to guarantee.
            continue;
        }
        let info = family
            .fragment_info(class, &fragment)
            .expect("witness chains stay inside the family")
            .clone();
        output[m] = info.witness_action;
        for next_class in 0..n_classes {
            let node = (info.witness_set.clone(), next_class);
            let target = match index.get(&node) {
                Some(&t) => t,
                None => {
                    let t = output.len();
                    index.insert(node.clone(), t);
                    output.push(0);
                    update.push(vec![0; n_classes]);
                    queue.push_back(node);
                    t
                }
            };
            update[m][next_class] = target;
        }
    }

    Ok(FiniteMemoryStrategy { machine: MooreMachine { initial: 1, output, update } })
}

/// Correspondence between the states of a reduced arena and what they stand
/// for in the arena it was built from.
#[derive(Debug, Clone)]
pub enum StateOrigin {
    /// State `i` is the pair `pairs[i] = (original state, automaton state)`.
    Product { n_aut: usize, pairs: Vec<(StateId, AutState)> },
    /// State `i` is the set `cells[i]` of pairwise adversary-equivalent
    /// original states.
    Cells { cells: Vec<StateSet> },
}

/// A reduced arena together with its state correspondence, the image of the
/// final set when the reduction defines one, and the image of the queried
/// start knowledge when one was supplied.
#[derive(Debug, Clone)]
pub struct ReductionArtifacts {
    pub arena: Arena,
    pub origin: StateOrigin,
    pub final_states: Option<StateSet>,
    pub initial_states: Option<StateSet>,
}

impl ReductionArtifacts {
    /// Product-state index of `(s, q)`.
    pub fn product_id(&self, s: StateId, q: AutState) -> StateId {
        match &self.origin {
            StateOrigin::Product { n_aut, .. } => s * n_aut + q,
            StateOrigin::Cells { .. } => panic!("not a product reduction"),
        }
    }

    pub fn product_pair(&self, id: StateId) -> (StateId, AutState) {
        match &self.origin {
            StateOrigin::Product { pairs, .. } => pairs[id],
            StateOrigin::Cells { .. } => panic!("not a product reduction"),
        }
    }
}

/// The enriched arena embedding a constraint automaton: states are pairs,
/// the automaton component advances deterministically on Eve's action and
/// the observed class of the successor, Eve observes (class, automaton
/// state) jointly, and the adversary is perfectly informed.
pub fn product_arena_with_automaton(arena: &Arena, t: &ConstraintAutomaton) -> ReductionArtifacts {
    let n = arena.n_states();
    let nq = t.n_states();

    let name = |s: StateId, q: AutState| format!("{}@{q}", arena.states[s]);
    let mut raw = RawArena {
        eve_actions: arena.eve_actions.clone(),
        adam_actions: arena.adam_actions.clone(),
        ..RawArena::default()
    };
    let mut pairs = Vec::with_capacity(n * nq);
    for s in 0..n {
        for q in 0..nq {
            raw.states.push(name(s, q));
            pairs.push((s, q));
        }
    }
    for s in 0..n {
        for q in 0..nq {
            for eve in 0..arena.n_eve_actions() {
                for adam in 0..arena.n_adam_actions() {
                    let dist = arena
                        .distribution(s, eve, adam)
                        .iter()
                        .map(|(succ, p)| {
                            let q_next = t.step(q, eve, arena.eve_class_of(*succ));
                            (name(*succ, q_next), p.clone())
                        })
                        .collect();
                    raw.transitions.push((
                        name(s, q),
                        arena.eve_actions[eve].clone(),
                        arena.adam_actions[adam].clone(),
                        dist,
                    ));
                }
            }
        }
    }
    for class in &arena.eve_partition.classes {
        for q in 0..nq {
            raw.eve_classes.push(class.iter().map(|s| name(s, q)).collect());
        }
    }
    raw.adam_classes = raw.states.iter().map(|s| vec![s.clone()]).collect();

    let product =
        crate::arena::validate_arena(&raw).expect("product of a valid arena and automaton is valid");
    debug_assert_eq!(product.n_states(), n * nq);
    ReductionArtifacts {
        arena: product,
        origin: StateOrigin::Product { n_aut: nq, pairs },
        final_states: None,
        initial_states: None,
    }
}

/// The largest family of knowledges avoiding `forbidden` from which Eve can
/// keep her knowledge inside the family forever, restricted to the
/// knowledges reachable from `initial` (unreachable knowledges cannot
/// influence the reachable part of the region). Holds the surviving
/// knowledges and the admissible actions of each.
pub struct SafetyRegion {
    pub knowledges: Vec<StateSet>,
    pub admissible: Vec<Vec<ActionId>>,
    pub index: HashMap<StateSet, usize>,
}

pub fn knowledge_safety_region(
    arena: &Arena,
    forbidden: &StateSet,
    initial: &StateSet,
) -> SafetyRegion {
    let n_classes = arena.eve_partition.len();
    let ne = arena.n_eve_actions();

    // Reachable knowledge closure; knowledges touching `forbidden` are kept
    // as dead ends so the edges into them can be disallowed.
    let mut index: HashMap<StateSet, usize> = HashMap::new();
    let mut knowledges: Vec<StateSet> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    index.insert(initial.clone(), 0);
    knowledges.push(initial.clone());
    queue.push_back(0);
    while let Some(i) = queue.pop_front() {
        if knowledges[i].intersects(forbidden) {
            continue;
        }
        let k = knowledges[i].clone();
        for eve in 0..ne {
            for class in 0..n_classes {
                let next = update_knowledge(arena, &k, eve, class);
                if next.is_empty() || index.contains_key(&next) {
                    continue;
                }
                let id = knowledges.len();
                index.insert(next.clone(), id);
                knowledges.push(next);
                queue.push_back(id);
            }
        }
    }

    let total = knowledges.len();
    let mut alive: Vec<bool> = knowledges.iter().map(|k| !k.intersects(forbidden)).collect();

    // Distinct successor knowledges per (knowledge, action), plus the
    // reverse index driving the deletion worklist.
    let mut successors: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); ne]; total];
    let mut predecessors: Vec<Vec<(usize, ActionId)>> = vec![Vec::new(); total];
    for i in 0..total {
        if !alive[i] {
            continue;
        }
        for eve in 0..ne {
            for class in 0..n_classes {
                let next = update_knowledge(arena, &knowledges[i], eve, class);
                if next.is_empty() {
                    continue;
                }
                let j = index[&next];
                if !successors[i][eve].contains(&j) {
                    successors[i][eve].push(j);
                    predecessors[j].push((i, eve));
                }
            }
        }
    }

    // An action stays admissible while all its successors are alive; a
    // knowledge stays alive while some action is admissible. Greatest
    // fixpoint by worklist deletion.
    let mut action_alive: Vec<Vec<bool>> = (0..total)
        .map(|i| {
            (0..ne)
                .map(|eve| alive[i] && successors[i][eve].iter().all(|&j| alive[j]))
                .collect()
        })
        .collect();
    let mut worklist: VecDeque<usize> = (0..total)
        .filter(|&i| alive[i] && !action_alive[i].iter().any(|&a| a))
        .collect();
    while let Some(i) = worklist.pop_front() {
        if !alive[i] {
            continue;
        }
        alive[i] = false;
        for &(p, eve) in &predecessors[i] {
            if alive[p] && action_alive[p][eve] {
                action_alive[p][eve] = false;
                if !action_alive[p].iter().any(|&a| a) {
                    worklist.push_back(p);
                }
            }
        }
    }

    let mut region =
        SafetyRegion { knowledges: Vec::new(), admissible: Vec::new(), index: HashMap::new() };
    for i in 0..total {
        if !alive[i] {
            continue;
        }
        let id = region.knowledges.len();
        region.index.insert(knowledges[i].clone(), id);
        region.knowledges.push(knowledges[i].clone());
        region.admissible.push((0..ne).filter(|&eve| action_alive[i][eve]).collect());
    }
    region
}

/// Decision plus artifacts of a constraint-compatible positive-reach solve.
#[derive(Debug, Clone)]
pub struct TCompatOutcome {
    pub winning: bool,
    /// Witness strategy over the original arena's observations, compatible
    /// with the constraint automaton along every consistent play.
    pub strategy: Option<FiniteMemoryStrategy>,
    /// Rank of the start knowledge in the reduced game: the play reaches the
    /// final set with positive probability within this many steps.
    pub rank: Option<u32>,
    /// The arena the final fixpoint ran on, with its family, for structural
    /// checks.
    pub reduced_arena: Arena,
    pub family: RankedFamily,
}

/// Decides whether Eve has an automaton-compatible positively winning
/// strategy in the reachability game from `start` against a perfectly
/// informed adversary, and synthesizes one if so.
pub fn positive_reach_tcompatible_perfect(
    arena: &Arena,
    t: &ConstraintAutomaton,
    start: &Knowledge,
    f: &StateSet,
) -> Result<TCompatOutcome, SolveError> {
    if arena.info_ordering() != InfoOrdering::AdamPerfect {
        return Err(SolveError::Unsupported(arena.info_ordering()));
    }

    // Stage 1: embed the automaton and compute the knowledge region in which
    // Eve surely keeps it away from its sink.
    let embedded = product_arena_with_automaton(arena, t);
    let np = embedded.arena.n_states();
    let forbidden =
        StateSet::from_iter(np, (0..arena.n_states()).map(|s| embedded.product_id(s, t.sink)));
    let initial_knowledge =
        StateSet::from_iter(np, start.set().iter().map(|s| embedded.product_id(s, t.initial)));
    let region = knowledge_safety_region(&embedded.arena, &forbidden, &initial_knowledge);

    // Stage 2: package the region as a knowledge automaton over the original
    // observations.
    let tprime = package_region(arena, t, &embedded, &region, &initial_knowledge);

    // Stage 3: embed the packaged automaton and decide plain positive
    // reachability of final states tagged with a live automaton state.
    let enriched = product_arena_with_automaton(arena, &tprime);
    let starts = StateSet::from_iter(
        enriched.arena.n_states(),
        start.set().iter().map(|s| enriched.product_id(s, tprime.initial)),
    );
    let (restricted, kept) = enriched.arena.restrict_to_reachable(&starts);
    let old_to_new: HashMap<StateId, StateId> =
        kept.iter().enumerate().map(|(new, &old)| (old, new)).collect();

    let mut finals = StateSet::empty(restricted.n_states());
    for (new, &old) in kept.iter().enumerate() {
        let (s, q) = enriched.product_pair(old);
        if f.contains(s) && q != tprime.sink {
            finals.insert(new);
        }
    }
    let start_restricted = StateSet::from_iter(
        restricted.n_states(),
        start.set().iter().map(|s| old_to_new[&enriched.product_id(s, tprime.initial)]),
    );

    let family = reach_fixpoint(&restricted, &finals);
    let rank = family.rank_of(&restricted, &start_restricted);
    let strategy = match rank {
        None => None,
        Some(_) => {
            let start_knowledge = Knowledge::new(&restricted, start_restricted.clone())
                .expect("start states share (class, automaton state)");
            let inner = strategy_from_ranks(&restricted, &family, &start_knowledge)?;
            Some(lift_product_strategy(arena, &tprime, &restricted, &kept, &enriched, &inner))
        }
    };

    Ok(TCompatOutcome { winning: rank.is_some(), strategy, rank, reduced_arena: restricted, family })
}

/// Builds the knowledge automaton of a safety region: states are the
/// region's knowledges plus one merged sink, the initial state carries the
/// start set, and transitions re-run the knowledge update inside the
/// embedded arena. All members of an embedded knowledge share their
/// automaton component, so the automaton reads original observations.
fn package_region(
    arena: &Arena,
    t: &ConstraintAutomaton,
    embedded: &ReductionArtifacts,
    region: &SafetyRegion,
    initial_knowledge: &StateSet,
) -> ConstraintAutomaton {
    let ne = arena.n_eve_actions();
    let nc = arena.eve_partition.len();
    let sink = region.knowledges.len();
    let n = sink + 1;

    let mut trans = vec![vec![vec![sink; nc]; ne]; n];
    let mut act: Vec<Vec<ActionId>> = vec![Vec::new(); n];

    for (i, knowledge) in region.knowledges.iter().enumerate() {
        act[i] = region.admissible[i].clone();
        let q_common =
            embedded.product_pair(knowledge.first().expect("region knowledges are non-empty")).1;
        for &eve in &region.admissible[i] {
            for class in 0..nc {
                let q_next = t.step(q_common, eve, class);
                let rep = arena.eve_partition.classes[class].first().expect("classes non-empty");
                let embedded_class =
                    embedded.arena.eve_partition.class_of[embedded.product_id(rep, q_next)];
                let next = update_knowledge(&embedded.arena, knowledge, eve, embedded_class);
                if next.is_empty() {
                    continue; // impossible observation; edge stays on the sink
                }
                trans[i][eve][class] = *region
                    .index
                    .get(&next)
                    .expect("admissible actions keep the knowledge inside the region");
            }
        }
    }

    let initial = region.index.get(initial_knowledge).copied().unwrap_or(sink);
    ConstraintAutomaton { initial, sink, trans, act }
}

/// Translates a strategy synthesized on the enriched arena back to the
/// original observations. The memory tracks the packaged automaton alongside
/// the inner memory; whenever the inner prescription is not admissible in
/// the current region knowledge (it always is along the witness chain, but
/// not at dead memories), the first admissible action is played instead, so
/// the lifted strategy stays automaton-compatible along every consistent
/// play.
fn lift_product_strategy(
    arena: &Arena,
    tprime: &ConstraintAutomaton,
    restricted: &Arena,
    kept: &[StateId],
    enriched: &ReductionArtifacts,
    inner: &FiniteMemoryStrategy,
) -> FiniteMemoryStrategy {
    let nc = arena.eve_partition.len();

    // Restricted-arena class of each surviving (original class, automaton
    // state) pair.
    let mut restricted_class: HashMap<(ClassId, AutState), ClassId> = HashMap::new();
    for (class_id, class) in restricted.eve_partition.classes.iter().enumerate() {
        let rep = kept[class.first().expect("classes are non-empty")];
        let (s, q) = enriched.product_pair(rep);
        restricted_class.insert((arena.eve_class_of(s), q), class_id);
    }

    let mut output: Vec<ActionId> = vec![0];
    let mut update: Vec<Vec<usize>> = vec![vec![0; nc]];
    let mut index: HashMap<(usize, AutState), usize> = HashMap::new();
    let mut queue: VecDeque<(usize, AutState)> = VecDeque::new();
    index.insert((inner.machine.initial, tprime.initial), 0);
    queue.push_back((inner.machine.initial, tprime.initial));

    while let Some((m, q)) = queue.pop_front() {
        let id = index[&(m, q)];
        let raw = inner.machine.output[m];
        let action = if tprime.allows(q, raw) { raw } else { *tprime.act[q].first().unwrap_or(&raw) };
        output[id] = action;
        for class in 0..nc {
            let q_next = tprime.step(q, action, class);
            let m_next = match restricted_class.get(&(class, q_next)) {
                Some(&rc) => inner.machine.update[m][rc],
                // Unreachable observation in the enriched game; freeze the
                // inner memory.
                None => m,
            };
            let node = (m_next, q_next);
            let target = match index.get(&node) {
                Some(&t) => t,
                None => {
                    let t = output.len();
                    index.insert(node, t);
                    output.push(0);
                    update.push(vec![0; nc]);
                    queue.push_back(node);
                    t
                }
            };
            update[id][class] = target;
        }
    }

    FiniteMemoryStrategy { machine: MooreMachine { initial: 0, output, update } }
}

/// The indistinguishable-subset reduction for a more-informed adversary:
/// states are the non-empty sets of pairwise adversary-equivalent states
/// reachable from the image of the start knowledge, transitions distribute
/// uniformly over the adversary-distinguishable pieces of the successor
/// supports, Eve observes the common class of a cell's members, and the
/// adversary observes cells exactly. A cell is final when it meets the
/// final set; the start maps to the singletons of the start knowledge.
pub fn more_informed_reduction(
    arena: &Arena,
    f: &StateSet,
    start: &Knowledge,
) -> Result<ReductionArtifacts, SolveError> {
    match arena.info_ordering() {
        InfoOrdering::AdamPerfect | InfoOrdering::AdamMoreInformed => {}
        other => return Err(SolveError::Unsupported(other)),
    }
    let n = arena.n_states();

    let mut index: HashMap<StateSet, usize> = HashMap::new();
    let mut cells: Vec<StateSet> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for s in start.set().iter() {
        let cell = StateSet::singleton(n, s);
        if !index.contains_key(&cell) {
            let id = cells.len();
            index.insert(cell.clone(), id);
            cells.push(cell);
            queue.push_back(id);
        }
    }

    // (cell, eve, adam) -> successor cells, discovered breadth-first.
    let mut moves: Vec<Vec<Vec<Vec<usize>>>> = Vec::new();
    while let Some(ci) = queue.pop_front() {
        debug_assert_eq!(ci, moves.len());
        let cell = cells[ci].clone();
        let mut per_eve = Vec::with_capacity(arena.n_eve_actions());
        for eve in 0..arena.n_eve_actions() {
            let mut per_adam = Vec::with_capacity(arena.n_adam_actions());
            for adam in 0..arena.n_adam_actions() {
                let mut merged = StateSet::empty(n);
                for s in cell.iter() {
                    merged.union_with(arena.support(s, eve, adam));
                }
                let mut ups = Vec::new();
                for aclass in &arena.adam_partition.classes {
                    let piece = merged.intersection(aclass);
                    if piece.is_empty() {
                        continue;
                    }
                    let id = match index.get(&piece) {
                        Some(&id) => id,
                        None => {
                            let id = cells.len();
                            index.insert(piece.clone(), id);
                            cells.push(piece);
                            queue.push_back(id);
                            id
                        }
                    };
                    ups.push(id);
                }
                per_adam.push(ups);
            }
            per_eve.push(per_adam);
        }
        moves.push(per_eve);
    }

    let cell_name = |cell: &StateSet| -> String {
        cell.iter().map(|s| arena.states[s].clone()).collect::<Vec<_>>().join("+")
    };
    let mut raw = RawArena {
        states: cells.iter().map(&cell_name).collect(),
        eve_actions: arena.eve_actions.clone(),
        adam_actions: arena.adam_actions.clone(),
        ..RawArena::default()
    };
    for (ci, per_eve) in moves.iter().enumerate() {
        for (eve, per_adam) in per_eve.iter().enumerate() {
            for (adam, ups) in per_adam.iter().enumerate() {
                let share = BigRational::new(BigInt::from(1), BigInt::from(ups.len() as i64));
                let dist = ups.iter().map(|&u| (raw.states[u].clone(), share.clone())).collect();
                raw.transitions.push((
                    raw.states[ci].clone(),
                    arena.eve_actions[eve].clone(),
                    arena.adam_actions[adam].clone(),
                    dist,
                ));
            }
        }
    }
    // Cells grouped by the (single) original class of their members, in
    // original class order.
    for class in &arena.eve_partition.classes {
        let members: Vec<String> =
            cells.iter().filter(|cell| cell.is_subset(class)).map(&cell_name).collect();
        if !members.is_empty() {
            raw.eve_classes.push(members);
        }
    }
    raw.adam_classes = raw.states.iter().map(|s| vec![s.clone()]).collect();

    let reduced = crate::arena::validate_arena(&raw).expect("reduction of a valid arena is valid");
    let final_states = StateSet::from_iter(
        cells.len(),
        cells.iter().enumerate().filter(|(_, c)| c.intersects(f)).map(|(i, _)| i),
    );
    let initial_states = StateSet::from_iter(
        cells.len(),
        start.set().iter().map(|s| index[&StateSet::singleton(n, s)]),
    );
    Ok(ReductionArtifacts {
        arena: reduced,
        origin: StateOrigin::Cells { cells },
        final_states: Some(final_states),
        initial_states: Some(initial_states),
    })
}

/// Decides automaton-compatible positive reachability for a perfectly
/// informed or more informed adversary; the more-informed case reduces to
/// the perfect case and the synthesized strategy carries over verbatim to
/// the original game.
pub fn positive_reach_tcompatible(
    arena: &Arena,
    t: &ConstraintAutomaton,
    start: &Knowledge,
    f: &StateSet,
) -> Result<TCompatOutcome, SolveError> {
    match arena.info_ordering() {
        InfoOrdering::AdamPerfect => positive_reach_tcompatible_perfect(arena, t, start, f),
        InfoOrdering::AdamMoreInformed => {
            let reduction = more_informed_reduction(arena, f, start)?;
            let reduced = &reduction.arena;
            let StateOrigin::Cells { cells } = &reduction.origin else { unreachable!() };

            // The reduced Eve classes embed into the original ones; re-key
            // the automaton, then map the strategy's update table back.
            let orig_class_of: Vec<ClassId> = reduced
                .eve_partition
                .classes
                .iter()
                .map(|class| {
                    let rep = class.first().expect("classes are non-empty");
                    let member = cells[rep].first().expect("cells are non-empty");
                    arena.eve_class_of(member)
                })
                .collect();
            let t_reduced = reindex_automaton(t, &orig_class_of);

            let start_reduced = Knowledge::new(
                reduced,
                reduction.initial_states.clone().expect("reduction records the start image"),
            )
            .expect("start singletons share a class");
            let f_reduced = reduction.final_states.clone().expect("reduction records finals");

            let outcome =
                positive_reach_tcompatible_perfect(reduced, &t_reduced, &start_reduced, &f_reduced)?;
            let strategy = outcome
                .strategy
                .as_ref()
                .map(|s| remap_strategy_classes(s, &orig_class_of, arena.eve_partition.len()));
            Ok(TCompatOutcome { strategy, ..outcome })
        }
        other => Err(SolveError::Unsupported(other)),
    }
}

/// Re-keys an automaton's transition table from original class ids to a
/// reduced arena's class ids.
fn reindex_automaton(t: &ConstraintAutomaton, orig_class_of: &[ClassId]) -> ConstraintAutomaton {
    let trans = t
        .trans
        .iter()
        .map(|per_action| {
            per_action
                .iter()
                .map(|per_class| orig_class_of.iter().map(|&oc| per_class[oc]).collect())
                .collect()
        })
        .collect();
    ConstraintAutomaton { initial: t.initial, sink: t.sink, trans, act: t.act.clone() }
}

/// Re-keys a strategy's update table from reduced class ids back to the
/// original ones; original classes with no reduced counterpart are never
/// observed along consistent plays and freeze the memory.
fn remap_strategy_classes(
    strategy: &FiniteMemoryStrategy,
    orig_class_of: &[ClassId],
    n_orig_classes: usize,
) -> FiniteMemoryStrategy {
    let mut reduced_of: Vec<Option<ClassId>> = vec![None; n_orig_classes];
    for (reduced, &orig) in orig_class_of.iter().enumerate() {
        reduced_of[orig] = Some(reduced);
    }
    let update = strategy
        .machine
        .update
        .iter()
        .enumerate()
        .map(|(m, row)| (0..n_orig_classes).map(|oc| reduced_of[oc].map_or(m, |rc| row[rc])).collect())
        .collect();
    FiniteMemoryStrategy {
        machine: MooreMachine {
            initial: strategy.machine.initial,
            output: strategy.machine.output.clone(),
            update,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::corpus;
    use crate::knowledge::trivial_automaton;

    fn knowledge_named(arena: &Arena, names: &[&str]) -> Knowledge {
        let ids: Vec<StateId> = names.iter().map(|n| arena.state_index(n).unwrap()).collect();
        Knowledge::from_states(arena, &ids).unwrap()
    }

    #[test]
    fn example2_start_not_winning() {
        let (arena, obj, _) = corpus::corpus_arena("example2").unwrap();
        let family = reach_fixpoint(&arena, &obj.final_states);
        family.assert_downward_closed();
        let qw = StateSet::singleton(2, arena.state_index("q_w").unwrap());
        assert_eq!(family.rank_of(&arena, &qw), None);
        // Subsets of the final set have rank zero.
        let qf = StateSet::singleton(2, arena.state_index("q_f").unwrap());
        assert_eq!(family.rank_of(&arena, &qf), Some(0));

        let start = knowledge_named(&arena, &["q_w"]);
        assert!(strategy_from_ranks(&arena, &family, &start).is_err());
    }

    #[test]
    fn fig1_ranks_and_strategy() {
        let (arena, obj, _) = corpus::corpus_arena("fig1").unwrap();
        let family = reach_fixpoint(&arena, &obj.final_states);
        family.assert_downward_closed();

        let s0 = StateSet::singleton(6, arena.state_index("s0").unwrap());
        assert_eq!(family.rank_of(&arena, &s0), Some(2));
        let middle = StateSet::from_iter(
            6,
            ["s1", "s2", "s3", "s4"].iter().map(|n| arena.state_index(n).unwrap()),
        );
        assert_eq!(family.rank_of(&arena, &middle), Some(2));
        assert!(family.max_rank() <= 1 << 6);

        let start = knowledge_named(&arena, &["s1", "s2", "s3", "s4"]);
        let strategy = strategy_from_ranks(&arena, &family, &start).unwrap();
        // First move from the middle class is a; on staying in the middle
        // class the next move is b (the witness chain from the analysis).
        let m0 = strategy.machine.initial;
        let a = arena.eve_action_index("a").unwrap();
        let b = arena.eve_action_index("b").unwrap();
        assert_eq!(strategy.machine.output[m0], a);
        let mid_class = arena.eve_class_of(arena.state_index("s1").unwrap());
        let m1 = strategy.machine.update[m0][mid_class];
        assert_eq!(strategy.machine.output[m1], b);
    }

    #[test]
    fn fixpoint_is_support_invariant() {
        // Reweighting fig1's s0-split must not change the family.
        let (arena, obj, _) = corpus::corpus_arena("fig1").unwrap();
        let mut gf = corpus::corpus_game("fig1").unwrap();
        for t in &mut gf.transitions {
            if t.to.len() == 2 {
                t.to[0].prob = "1/4".into();
                t.to[1].prob = "3/4".into();
            }
        }
        let reweighted = gf.load().unwrap().arena;
        assert_eq!(
            reach_fixpoint(&arena, &obj.final_states),
            reach_fixpoint(&reweighted, &obj.final_states)
        );
    }

    #[test]
    fn tcompatible_with_trivial_automaton_matches_fixpoint() {
        for name in ["example2", "fig1", "fig2a", "fig2b"] {
            let (arena, obj, start) = corpus::corpus_arena(name).unwrap();
            let family = reach_fixpoint(&arena, &obj.final_states);
            let t = trivial_automaton(&arena);
            let start = Knowledge::new(&arena, start.unwrap()).unwrap();
            let outcome =
                positive_reach_tcompatible(&arena, &t, &start, &obj.final_states).unwrap();
            assert_eq!(
                outcome.winning,
                family.contains(&arena, start.set()),
                "pipeline disagrees with the direct fixpoint on {name}"
            );
            outcome.family.assert_downward_closed();
        }
    }

    #[test]
    fn product_with_trivial_automaton_has_expected_size() {
        let (arena, _, _) = corpus::corpus_arena("fig1").unwrap();
        let t = trivial_automaton(&arena);
        let product = product_arena_with_automaton(&arena, &t);
        assert_eq!(product.arena.n_states(), arena.n_states() * t.n_states());
    }

    #[test]
    fn safety_region_excludes_immediately_losing_knowledge() {
        // In example2 with everything forbidden except q_f, the start
        // knowledge {q_w} has no action keeping it safe.
        let (arena, _, _) = corpus::corpus_arena("example2").unwrap();
        let qw = arena.state_index("q_w").unwrap();
        let forbidden = StateSet::singleton(2, qw);
        let initial = StateSet::singleton(2, qw);
        let region = knowledge_safety_region(&arena, &forbidden, &initial);
        assert!(region.index.get(&initial).is_none());
    }

    #[test]
    fn safety_region_keeps_everything_when_forbidden_unreachable() {
        let (arena, _, _) = corpus::corpus_arena("fig2a").unwrap();
        let forbidden = StateSet::empty(2);
        let initial = StateSet::from_iter(2, [0, 1]);
        let region = knowledge_safety_region(&arena, &forbidden, &initial);
        assert!(region.index.contains_key(&initial));
        for adm in &region.admissible {
            assert_eq!(adm.len(), arena.n_eve_actions());
        }
    }

    #[test]
    fn more_informed_reduction_on_perfect_adversary_is_isomorphic() {
        let (arena, obj, start) = corpus::corpus_arena("fig1").unwrap();
        let start = Knowledge::new(&arena, start.unwrap()).unwrap();
        let reduction = more_informed_reduction(&arena, &obj.final_states, &start).unwrap();
        let StateOrigin::Cells { cells } = &reduction.origin else { unreachable!() };
        assert!(cells.iter().all(|c| c.len() == 1), "perfect adversary gives singleton cells");
        // Uniform probabilities over singleton updates are all 1.
        let reduced = &reduction.arena;
        assert_eq!(
            reach_fixpoint(reduced, reduction.final_states.as_ref().unwrap())
                .rank_of(reduced, reduction.initial_states.as_ref().unwrap()),
            Some(2)
        );
    }

    #[test]
    fn more_informed_up_is_uniform_over_pieces() {
        // Adam merges {t1, t2}: from {s} the successor support {t1, t2, u}
        // splits into two pieces with probability 1/2 each.
        use num_traits::One;
        let mut gf = corpus::corpus_game("example2").unwrap();
        gf.states = vec!["s".into(), "t1".into(), "t2".into(), "u".into()];
        gf.eve_actions = vec!["a".into()];
        gf.adam_actions = vec!["x".into()];
        gf.eve_classes = vec![vec!["s".into(), "t1".into(), "t2".into(), "u".into()]];
        gf.adam_classes = vec![
            vec!["s".into()],
            vec!["t1".into(), "t2".into()],
            vec!["u".into()],
        ];
        gf.transitions = vec![crate::cli::gamefile::TransitionEntry {
            from: "s".into(),
            eve: "a".into(),
            adam: "x".into(),
            to: vec![
                crate::cli::gamefile::ProbEntry { state: "t1".into(), prob: "1/3".into() },
                crate::cli::gamefile::ProbEntry { state: "t2".into(), prob: "1/3".into() },
                crate::cli::gamefile::ProbEntry { state: "u".into(), prob: "1/3".into() },
            ],
        }];
        for from in ["t1", "t2", "u"] {
            gf.transitions.push(crate::cli::gamefile::TransitionEntry {
                from: from.into(),
                eve: "a".into(),
                adam: "x".into(),
                to: vec![crate::cli::gamefile::ProbEntry { state: from.into(), prob: "1/1".into() }],
            });
        }
        gf.objective.final_states = vec!["u".into()];
        gf.start = Some(crate::cli::gamefile::StartEntry { knowledge: vec!["s".into()] });
        let loaded = gf.load().unwrap();
        assert_eq!(loaded.arena.info_ordering(), InfoOrdering::AdamMoreInformed);

        let start = Knowledge::new(&loaded.arena, loaded.start.unwrap()).unwrap();
        let reduction =
            more_informed_reduction(&loaded.arena, &loaded.objective.final_states, &start).unwrap();
        let reduced = &reduction.arena;
        let s_cell = reduced.state_index("s").unwrap();
        let dist = reduced.distribution(s_cell, 0, 0);
        assert_eq!(dist.len(), 2);
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        assert!(dist.iter().all(|(_, p)| *p == half));
    }
}
