//! Independent exact verification: fix Eve's strategy, build the finite
//! product decision process with the adversary as the sole decision maker,
//! and solve the resulting Markov chains with exact rational arithmetic.
//!
//! The oracle works on the fully observable product, where memoryless
//! adversaries attain the extremal reachability and Büchi probabilities;
//! this matches the original game exactly when the adversary is perfectly
//! informed, which is the certified regime. For a merely more informed
//! adversary, callers first apply the indistinguishable-subset reduction and
//! verify in the reduced perfect-information game.
//!
//! Quantitative answers enumerate the adversary's pure memoryless strategies
//! and solve each chain exactly; the qualitative verdicts (positive
//! reachability, almost-sure Büchi) also have direct graph
//! characterizations, used both as fast paths and as cross-checks of the
//! enumeration.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::arena::{ActionId, Arena, StateId};
use crate::bitset::StateSet;
use crate::knowledge::Knowledge;
use crate::strategy::{AdamStrategy, FiniteMemoryStrategy, MemoryId, MooreMachine};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("enumeration budget exceeded: needs {needed} candidates, budget {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
}

/// Default enumeration budget, overridable through `PURESTRAT_BUDGET`.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// A finite Markov chain with exact rational rows and a target marking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovChain {
    /// `rows[i]` is the outgoing distribution of state `i`; rows sum to one.
    pub rows: Vec<Vec<(usize, BigRational)>>,
    pub targets: StateSet,
}

impl MarkovChain {
    pub fn n_states(&self) -> usize {
        self.rows.len()
    }
}

/// Probability of eventually visiting the target set from `start`.
pub fn markov_chain_reach_prob(chain: &MarkovChain, start: usize) -> BigRational {
    markov_chain_reach_probs(chain)[start].clone()
}

/// Reachability probabilities from every state: states that cannot reach the
/// target by graph search get probability zero, the rest solve a linear
/// system by exact Gaussian elimination.
pub fn markov_chain_reach_probs(chain: &MarkovChain) -> Vec<BigRational> {
    let n = chain.n_states();

    // Backward closure: states with a support path into the target.
    let mut can_reach = chain.targets.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            if !can_reach.contains(i) && chain.rows[i].iter().any(|(j, _)| can_reach.contains(*j)) {
                can_reach.insert(i);
                changed = true;
            }
        }
    }

    let unknowns: Vec<usize> =
        (0..n).filter(|&i| can_reach.contains(i) && !chain.targets.contains(i)).collect();
    let col_of: HashMap<usize, usize> = unknowns.iter().enumerate().map(|(c, &i)| (i, c)).collect();

    // p_i = sum_{j unknown} P(i,j) p_j + sum_{j target} P(i,j).
    let m = unknowns.len();
    let mut matrix: Vec<Vec<BigRational>> = vec![vec![BigRational::zero(); m + 1]; m];
    for (r, &i) in unknowns.iter().enumerate() {
        matrix[r][r] = BigRational::one();
        for (j, p) in &chain.rows[i] {
            if chain.targets.contains(*j) {
                matrix[r][m] += p;
            } else if let Some(&c) = col_of.get(j) {
                matrix[r][c] -= p;
            }
        }
    }
    let solution = gaussian_elimination(matrix);

    let mut probs = vec![BigRational::zero(); n];
    for i in chain.targets.iter() {
        probs[i] = BigRational::one();
    }
    for (r, &i) in unknowns.iter().enumerate() {
        probs[i] = solution[r].clone();
    }
    probs
}

/// Solves a square system whose rows carry the augmented column last.
/// Pivots prefer entries of small numerator-times-denominator bit size to
/// limit coefficient blowup; the systems solved here are non-singular by
/// construction.
fn gaussian_elimination(mut matrix: Vec<Vec<BigRational>>) -> Vec<BigRational> {
    let m = matrix.len();
    for col in 0..m {
        let pivot_row = (col..m)
            .filter(|&r| !matrix[r][col].is_zero())
            .min_by_key(|&r| {
                let v = &matrix[r][col];
                v.numer().magnitude().bits() + v.denom().magnitude().bits()
            })
            .expect("reachability system is non-singular");
        matrix.swap(col, pivot_row);
        let pivot = matrix[col][col].clone();
        for entry in matrix[col].iter_mut() {
            *entry /= pivot.clone();
        }
        for r in 0..m {
            if r == col || matrix[r][col].is_zero() {
                continue;
            }
            let factor = matrix[r][col].clone();
            for c in col..=m {
                let delta = &factor * &matrix[col][c];
                matrix[r][c] -= delta;
            }
        }
    }
    (0..m).map(|r| matrix[r][m].clone()).collect()
}

/// Probability of visiting the target set infinitely often: the chance of
/// reaching a bottom strongly connected component that intersects it.
pub fn markov_chain_buchi_probs(chain: &MarkovChain) -> Vec<BigRational> {
    let n = chain.n_states();
    let mut graph = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (i, row) in chain.rows.iter().enumerate() {
        for (j, _) in row {
            graph.add_edge(nodes[i], nodes[*j], ());
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    let mut scc_of = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for node in scc {
            scc_of[node.index()] = k;
        }
    }
    let mut good = StateSet::empty(n);
    for scc in &sccs {
        let members: Vec<usize> = scc.iter().map(|nd| nd.index()).collect();
        let bottom =
            members.iter().all(|&i| chain.rows[i].iter().all(|(j, _)| scc_of[*j] == scc_of[i]));
        if bottom && members.iter().any(|&i| chain.targets.contains(i)) {
            for &i in &members {
                good.insert(i);
            }
        }
    }
    markov_chain_reach_probs(&MarkovChain { rows: chain.rows.clone(), targets: good })
}

/// Shortest support-path length from `start` into the target set, if any.
pub fn min_steps_to_target(chain: &MarkovChain, start: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; chain.n_states()];
    let mut queue = VecDeque::new();
    dist[start] = 0;
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        if chain.targets.contains(i) {
            return Some(dist[i]);
        }
        for (j, _) in &chain.rows[i] {
            if dist[*j] == usize::MAX {
                dist[*j] = dist[i] + 1;
                queue.push_back(*j);
            }
        }
    }
    None
}

/// The finite decision process obtained by fixing Eve's strategy: states are
/// (arena state, Eve memory) pairs reachable from the starts, the adversary
/// picks the action, and the memory component advances deterministically by
/// Eve's update on the class of the successor state.
#[derive(Debug, Clone)]
pub struct ProductMDP {
    pub states: Vec<(StateId, MemoryId)>,
    pub index: HashMap<(StateId, MemoryId), usize>,
    /// Distinct transition rows per state, each with a representative
    /// adversary action; actions inducing equal rows are stored once.
    pub choices: Vec<Vec<(ActionId, Vec<(usize, BigRational)>)>>,
    /// Product states whose arena component is final.
    pub targets: StateSet,
    pub starts: Vec<usize>,
}

impl ProductMDP {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Number of pure memoryless adversary strategies, over distinct rows.
    pub fn n_adversary_choices(&self) -> u128 {
        self.choices.iter().map(|c| c.len() as u128).product()
    }
}

/// Builds the product of the arena under Eve's fixed strategy from the given
/// start states, marking the states whose arena component lies in `f`.
pub fn fix_eve_build_mdp(
    arena: &Arena,
    eve: &FiniteMemoryStrategy,
    starts: &StateSet,
    f: &StateSet,
) -> ProductMDP {
    let mut states: Vec<(StateId, MemoryId)> = Vec::new();
    let mut index: HashMap<(StateId, MemoryId), usize> = HashMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut intern = |node: (StateId, MemoryId),
                      states: &mut Vec<(StateId, MemoryId)>,
                      queue: &mut VecDeque<usize>,
                      index: &mut HashMap<(StateId, MemoryId), usize>| {
        *index.entry(node).or_insert_with(|| {
            states.push(node);
            queue.push_back(states.len() - 1);
            states.len() - 1
        })
    };
    let mut start_ids = Vec::new();
    for s in starts.iter() {
        start_ids.push(intern((s, eve.machine.initial), &mut states, &mut queue, &mut index));
    }

    let mut choices: Vec<Vec<(ActionId, Vec<(usize, BigRational)>)>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        debug_assert_eq!(i, choices.len());
        let (s, m) = states[i];
        let action = eve.machine.output[m];
        let mut rows: Vec<(ActionId, Vec<(usize, BigRational)>)> = Vec::new();
        for adam in 0..arena.n_adam_actions() {
            let mut row = Vec::new();
            for (t, p) in arena.distribution(s, action, adam) {
                let m_next = eve.machine.update[m][arena.eve_class_of(*t)];
                let id = intern((*t, m_next), &mut states, &mut queue, &mut index);
                row.push((id, p.clone()));
            }
            row.sort_by_key(|(id, _)| *id);
            if !rows.iter().any(|(_, existing)| *existing == row) {
                rows.push((adam, row));
            }
        }
        choices.push(rows);
    }

    let targets = StateSet::from_iter(
        states.len(),
        states.iter().enumerate().filter(|(_, (s, _))| f.contains(*s)).map(|(i, _)| i),
    );
    ProductMDP { states, index, choices, targets, starts: start_ids }
}

/// The Markov chain induced by one memoryless adversary choice, given as an
/// index into the distinct rows of each state.
pub fn chain_under_choice(mdp: &ProductMDP, row_indices: &[usize]) -> MarkovChain {
    let rows =
        mdp.choices.iter().zip(row_indices).map(|(rows, &c)| rows[c].1.clone()).collect();
    MarkovChain { rows, targets: mdp.targets.clone() }
}

/// A memoryless adversary strategy on the product: one row index per product
/// state, with the representative action played there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryChoice {
    pub row_indices: Vec<usize>,
    pub actions: Vec<ActionId>,
}

impl AdversaryChoice {
    fn from_rows(mdp: &ProductMDP, row_indices: Vec<usize>) -> Self {
        let actions =
            mdp.choices.iter().zip(&row_indices).map(|(rows, &c)| rows[c].0).collect();
        AdversaryChoice { row_indices, actions }
    }
}

fn min_over_adversaries(
    mdp: &ProductMDP,
    budget: u64,
    eval: fn(&MarkovChain) -> Vec<BigRational>,
) -> Result<(BigRational, AdversaryChoice), OracleError> {
    let needed = mdp.n_adversary_choices();
    if needed > budget as u128 {
        return Err(OracleError::BudgetExceeded { needed, budget });
    }
    let n = mdp.n_states();
    let mut current = vec![0usize; n];
    let mut best: Option<(BigRational, Vec<usize>)> = None;
    'outer: loop {
        let probs = eval(&chain_under_choice(mdp, &current));
        let value = mdp
            .starts
            .iter()
            .map(|&s| probs[s].clone())
            .min()
            .unwrap_or_else(BigRational::zero);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, current.clone()));
        }
        // Mixed-radix increment over the distinct rows.
        let mut pos = 0;
        loop {
            if pos == n {
                break 'outer;
            }
            current[pos] += 1;
            if current[pos] < mdp.choices[pos].len() {
                break;
            }
            current[pos] = 0;
            pos += 1;
        }
    }
    let (value, rows) = best.expect("at least one choice evaluated");
    Ok((value, AdversaryChoice::from_rows(mdp, rows)))
}

/// Exact minimum, over the adversary's pure memoryless strategies and the
/// start states, of the probability of reaching the marking, with a
/// minimizer. The fixed Eve strategy is positively winning exactly when the
/// minimum is positive.
pub fn min_reach_over_adam(
    mdp: &ProductMDP,
    budget: u64,
) -> Result<(BigRational, AdversaryChoice), OracleError> {
    min_over_adversaries(mdp, budget, markov_chain_reach_probs)
}

/// Exact minimum of the Büchi probability over the adversary's pure
/// memoryless strategies and the start states; the fixed Eve strategy is
/// almost-surely winning exactly when the minimum is one.
pub fn min_buchi_over_adam(
    mdp: &ProductMDP,
    budget: u64,
) -> Result<(BigRational, AdversaryChoice), OracleError> {
    min_over_adversaries(mdp, budget, markov_chain_buchi_probs)
}

/// The region from which the adversary can keep the play outside the marking
/// forever using supports alone: the largest set of non-target states where
/// some choice keeps the whole support inside the region. The minimum reach
/// probability is zero exactly when some start lies in it.
pub fn adversary_confinement_region(mdp: &ProductMDP) -> StateSet {
    let n = mdp.n_states();
    let mut region = StateSet::full(n).difference(&mdp.targets);
    loop {
        let mut changed = false;
        for i in region.clone().iter() {
            let safe =
                mdp.choices[i].iter().any(|(_, row)| row.iter().all(|(j, _)| region.contains(*j)));
            if !safe {
                region.remove(i);
                changed = true;
            }
        }
        if !changed {
            return region;
        }
    }
}

/// Whether the fixed Eve strategy reaches the marking with positive
/// probability against every adversary, decided by graph search alone.
pub fn is_positively_winning(mdp: &ProductMDP) -> bool {
    let region = adversary_confinement_region(mdp);
    mdp.starts.iter().all(|&s| !region.contains(s))
}

/// Checks almost-sure Büchi for the fixed Eve strategy against every
/// adversary. Returns `None` when it holds; otherwise a memoryless
/// adversary witness that reaches, with positive probability, a target-free
/// end component and stays inside it forever.
pub fn almost_sure_buchi_witness(mdp: &ProductMDP) -> Option<AdversaryChoice> {
    let n = mdp.n_states();

    // Maximal end components inside the non-target states: iteratively drop
    // choices whose support leaves the candidate set or the state's own
    // strongly connected component, then states with no choice left.
    let mut candidate: Vec<bool> = (0..n).map(|i| !mdp.targets.contains(i)).collect();
    let mut kept: Vec<Vec<usize>> = (0..n).map(|i| (0..mdp.choices[i].len()).collect()).collect();
    loop {
        for i in 0..n {
            if !candidate[i] {
                continue;
            }
            kept[i].retain(|&c| mdp.choices[i][c].1.iter().all(|(j, _)| candidate[*j]));
            if kept[i].is_empty() {
                candidate[i] = false;
            }
        }
        let mut graph = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
        for i in 0..n {
            if !candidate[i] {
                continue;
            }
            for &c in &kept[i] {
                for (j, _) in &mdp.choices[i][c].1 {
                    graph.add_edge(nodes[i], nodes[*j], ());
                }
            }
        }
        let sccs = petgraph::algo::tarjan_scc(&graph);
        let mut scc_of = vec![usize::MAX; n];
        for (k, scc) in sccs.iter().enumerate() {
            for node in scc {
                scc_of[node.index()] = k;
            }
        }
        let mut changed = false;
        for i in 0..n {
            if !candidate[i] {
                continue;
            }
            let before = kept[i].len();
            kept[i].retain(|&c| {
                mdp.choices[i][c].1.iter().all(|(j, _)| candidate[*j] && scc_of[*j] == scc_of[i])
            });
            if kept[i].len() != before {
                changed = true;
            }
            if kept[i].is_empty() {
                candidate[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // A target-free end component breaks almost-sure Büchi exactly when it
    // is reachable from a start through any supports.
    let mut reachable = vec![false; n];
    let mut queue = VecDeque::new();
    for &s in &mdp.starts {
        if !reachable[s] {
            reachable[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        for (_, row) in &mdp.choices[i] {
            for (j, _) in row {
                if !reachable[*j] {
                    reachable[*j] = true;
                    queue.push_back(*j);
                }
            }
        }
    }
    if !(0..n).any(|i| candidate[i] && reachable[i]) {
        return None;
    }

    // Memoryless witness: inside the component play a kept choice; outside,
    // walk backward-computed shortest support steps toward it.
    let mut row_indices: Vec<usize> = vec![0; n];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if candidate[i] {
            row_indices[i] = kept[i][0];
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    let mut rev: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (c, (_, row)) in mdp.choices[i].iter().enumerate() {
            for (j, _) in row {
                rev[*j].push((i, c));
            }
        }
    }
    while let Some(j) = queue.pop_front() {
        for &(i, c) in &rev[j] {
            if dist[i] == usize::MAX && !candidate[i] {
                dist[i] = dist[j] + 1;
                row_indices[i] = c;
                queue.push_back(i);
            }
        }
    }
    Some(AdversaryChoice::from_rows(mdp, row_indices))
}

/// Converts an adversary choice on the product into an executable strategy
/// for the simulator: the memory tracks the product state by reading the
/// adversary's observations. Meaningful for a perfectly informed adversary,
/// whose observation classes identify successor states.
pub fn adversary_choice_to_strategy(
    arena: &Arena,
    eve: &FiniteMemoryStrategy,
    mdp: &ProductMDP,
    choice: &AdversaryChoice,
    start: StateId,
) -> AdamStrategy {
    let n_classes = arena.adam_partition.len();
    let class_state: Vec<StateId> = arena
        .adam_partition
        .classes
        .iter()
        .map(|c| c.first().expect("classes are non-empty"))
        .collect();

    let n = mdp.n_states();
    let dead = n;
    let mut output: Vec<ActionId> = choice.actions.clone();
    output.push(0);
    let mut update: Vec<Vec<MemoryId>> = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (_, m) = mdp.states[i];
        let row: Vec<MemoryId> = (0..n_classes)
            .map(|class| {
                let t = class_state[class];
                let m_next = eve.machine.update[m][arena.eve_class_of(t)];
                mdp.index.get(&(t, m_next)).copied().unwrap_or(dead)
            })
            .collect();
        update.push(row);
    }
    update.push(vec![dead; n_classes]);

    let initial = mdp.index.get(&(start, eve.machine.initial)).copied().unwrap_or(dead);
    AdamStrategy { machine: MooreMachine { initial, output, update } }
}

/// What the brute-force search looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruteObjective {
    PositiveReach,
    AlmostSureBuchi,
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub winning: bool,
    pub witness: Option<FiniteMemoryStrategy>,
    /// Search nodes or candidate machines examined.
    pub explored: u64,
}

/// Exhaustive search for a winning pure finite-memory strategy from an
/// intra-class start knowledge, certifying every candidate on the product.
///
/// For positive reachability the search unfolds bounded-horizon strategy
/// trees: an action per observation prefix and one carrier successor per
/// (state, adversary action) obligation, memoized per (obligation set,
/// remaining horizon). A winning strategy restricted to its horizon is such
/// a tree, and minimal winning horizons never exceed [`complete_horizon`],
/// so exhaustion without a winner is a sound no. For almost-sure Büchi the
/// search enumerates Moore machines up to `memory_bound` states in canonical
/// discovery order and certifies each; a no is relative to the bound.
pub fn brute_force_eve(
    arena: &Arena,
    f: &StateSet,
    objective: BruteObjective,
    memory_bound: usize,
    start: &Knowledge,
    budget: u64,
) -> Result<BruteForceResult, OracleError> {
    match objective {
        BruteObjective::PositiveReach => {
            brute_force_positive_reach(arena, f, memory_bound, start, budget)
        }
        BruteObjective::AlmostSureBuchi => brute_force_buchi(arena, f, memory_bound, start, budget),
    }
}

/// Horizon making the bounded reachability search exhaustive: every level of
/// the winning hierarchy adds at least one per-class obligation set before
/// stabilizing, so minimal winning horizons never exceed their total count.
pub fn complete_horizon(arena: &Arena, f: &StateSet) -> usize {
    arena
        .eve_partition
        .classes
        .iter()
        .map(|class| (1usize << class.difference(f).len().min(60)) - 1)
        .sum()
}

struct ReachPlan {
    action: ActionId,
    children: Vec<Option<Rc<ReachPlan>>>,
}

struct ReachSearch<'a> {
    arena: &'a Arena,
    f: &'a StateSet,
    memo: HashMap<(StateSet, usize), Option<Rc<ReachPlan>>>,
    explored: u64,
    budget: u64,
}

impl ReachSearch<'_> {
    /// A plan that, from any state of the non-final intra-class obligation
    /// set, guarantees a consistent path into the final set within `horizon`
    /// steps whatever the adversary does.
    fn solve(
        &mut self,
        obligation: &StateSet,
        horizon: usize,
    ) -> Result<Option<Rc<ReachPlan>>, OracleError> {
        if let Some(hit) = self.memo.get(&(obligation.clone(), horizon)) {
            return Ok(hit.clone());
        }
        self.explored += 1;
        if self.explored > self.budget {
            return Err(OracleError::BudgetExceeded {
                needed: self.explored as u128,
                budget: self.budget,
            });
        }
        let mut result = None;
        if horizon > 0 {
            'actions: for action in 0..self.arena.n_eve_actions() {
                let mut requirements: Vec<StateSet> = Vec::new();
                for s in obligation.iter() {
                    for adversary in 0..self.arena.n_adam_actions() {
                        let support = self.arena.support(s, action, adversary);
                        if support.intersects(self.f) {
                            continue;
                        }
                        if !requirements.contains(support) {
                            requirements.push(support.clone());
                        }
                    }
                }
                let mut groups =
                    vec![StateSet::empty(self.arena.n_states()); self.arena.eve_partition.len()];
                match self.assign(&requirements, 0, &mut groups, horizon)? {
                    None => continue 'actions,
                    Some(children) => {
                        result = Some(Rc::new(ReachPlan { action, children }));
                        break 'actions;
                    }
                }
            }
        }
        self.memo.insert((obligation.clone(), horizon), result.clone());
        Ok(result)
    }

    /// Assigns one carrier per requirement; the carriers accumulated per
    /// class must themselves be solvable one step earlier. Returns the
    /// per-class child plans of a successful assignment.
    fn assign(
        &mut self,
        requirements: &[StateSet],
        idx: usize,
        groups: &mut Vec<StateSet>,
        horizon: usize,
    ) -> Result<Option<Vec<Option<Rc<ReachPlan>>>>, OracleError> {
        let Some(requirement) = requirements.get(idx) else {
            let mut children = vec![None; groups.len()];
            for (class, group) in groups.iter().enumerate() {
                if group.is_empty() {
                    continue;
                }
                match self.solve(group, horizon - 1)? {
                    Some(plan) => children[class] = Some(plan),
                    None => return Ok(None),
                }
            }
            return Ok(Some(children));
        };
        for carrier in requirement.iter() {
            let class = self.arena.eve_class_of(carrier);
            if groups[class].contains(carrier) {
                if let Some(children) = self.assign(requirements, idx + 1, groups, horizon)? {
                    return Ok(Some(children));
                }
                continue;
            }
            groups[class].insert(carrier);
            // Obligations only grow along a branch; an unsolvable partial
            // group prunes every extension.
            if self.solve(&groups[class], horizon - 1)?.is_some() {
                if let Some(children) = self.assign(requirements, idx + 1, groups, horizon)? {
                    return Ok(Some(children));
                }
            }
            groups[class].remove(carrier);
        }
        Ok(None)
    }
}

fn plan_to_strategy(arena: &Arena, plan: &Rc<ReachPlan>) -> FiniteMemoryStrategy {
    let nc = arena.eve_partition.len();
    let mut output: Vec<ActionId> = vec![0];
    let mut update: Vec<Vec<MemoryId>> = vec![vec![0; nc]];
    let mut index: HashMap<*const ReachPlan, MemoryId> = HashMap::new();
    let mut queue: VecDeque<Rc<ReachPlan>> = VecDeque::new();
    index.insert(Rc::as_ptr(plan), 1);
    output.push(0);
    update.push(vec![0; nc]);
    queue.push_back(plan.clone());
    while let Some(node) = queue.pop_front() {
        let id = index[&Rc::as_ptr(&node)];
        output[id] = node.action;
        for (class, child) in node.children.iter().enumerate() {
            let Some(child) = child else { continue };
            let target = match index.get(&Rc::as_ptr(child)) {
                Some(&t) => t,
                None => {
                    let t = output.len();
                    index.insert(Rc::as_ptr(child), t);
                    output.push(0);
                    update.push(vec![0; nc]);
                    queue.push_back(child.clone());
                    t
                }
            };
            update[id][class] = target;
        }
    }
    FiniteMemoryStrategy { machine: MooreMachine { initial: 1, output, update } }
}

fn brute_force_positive_reach(
    arena: &Arena,
    f: &StateSet,
    memory_bound: usize,
    start: &Knowledge,
    budget: u64,
) -> Result<BruteForceResult, OracleError> {
    let obligation = start.set().difference(f);
    if obligation.is_empty() {
        // Final at step zero; any strategy works.
        let witness =
            FiniteMemoryStrategy { machine: MooreMachine::constant(0, arena.eve_partition.len()) };
        return Ok(BruteForceResult { winning: true, witness: Some(witness), explored: 0 });
    }
    let horizon_cap = memory_bound.min(complete_horizon(arena, f));
    let mut search = ReachSearch { arena, f, memo: HashMap::new(), explored: 0, budget };
    for horizon in 1..=horizon_cap {
        if let Some(plan) = search.solve(&obligation, horizon)? {
            let witness = plan_to_strategy(arena, &plan);
            let mdp = fix_eve_build_mdp(arena, &witness, start.set(), f);
            assert!(
                is_positively_winning(&mdp),
                "search produced a plan the product certification rejects"
            );
            return Ok(BruteForceResult {
                winning: true,
                witness: Some(witness),
                explored: search.explored,
            });
        }
    }
    Ok(BruteForceResult { winning: false, witness: None, explored: search.explored })
}

/// Enumerates Moore machines with exactly `m` reachable memory states in
/// canonical discovery order (update targets never skip past the states
/// already seen) and yields them to `check` until it accepts one.
fn enumerate_machines<FCheck>(
    m: usize,
    n_classes: usize,
    n_actions: usize,
    explored: &mut u64,
    budget: u64,
    check: &mut FCheck,
) -> Result<Option<MooreMachine>, OracleError>
where
    FCheck: FnMut(&MooreMachine) -> bool,
{
    let slots = m * n_classes;
    let mut update_flat = vec![0usize; slots];
    loop {
        let mut max_seen = 0usize;
        let mut canonical = true;
        for &v in &update_flat {
            if v > max_seen + 1 {
                canonical = false;
                break;
            }
            max_seen = max_seen.max(v);
        }
        if canonical && (m == 1 || max_seen == m - 1) {
            let update: Vec<Vec<usize>> =
                (0..m).map(|i| update_flat[i * n_classes..(i + 1) * n_classes].to_vec()).collect();
            let mut output = vec![0usize; m];
            'outputs: loop {
                *explored += 1;
                if *explored > budget {
                    return Err(OracleError::BudgetExceeded { needed: *explored as u128, budget });
                }
                let machine =
                    MooreMachine { initial: 0, output: output.clone(), update: update.clone() };
                if check(&machine) {
                    return Ok(Some(machine));
                }
                let mut pos = 0;
                loop {
                    if pos == m {
                        break 'outputs;
                    }
                    output[pos] += 1;
                    if output[pos] < n_actions {
                        break;
                    }
                    output[pos] = 0;
                    pos += 1;
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == slots {
                return Ok(None);
            }
            update_flat[pos] += 1;
            if update_flat[pos] < m {
                break;
            }
            update_flat[pos] = 0;
            pos += 1;
        }
    }
}

fn brute_force_buchi(
    arena: &Arena,
    f: &StateSet,
    memory_bound: usize,
    start: &Knowledge,
    budget: u64,
) -> Result<BruteForceResult, OracleError> {
    let mut explored = 0u64;
    for m in 1..=memory_bound.max(1) {
        let mut check = |machine: &MooreMachine| {
            let candidate = FiniteMemoryStrategy { machine: machine.clone() };
            let mdp = fix_eve_build_mdp(arena, &candidate, start.set(), f);
            almost_sure_buchi_witness(&mdp).is_none()
        };
        if let Some(machine) = enumerate_machines(
            m,
            arena.eve_partition.len(),
            arena.n_eve_actions(),
            &mut explored,
            budget,
            &mut check,
        )? {
            return Ok(BruteForceResult {
                winning: true,
                witness: Some(FiniteMemoryStrategy { machine }),
                explored,
            });
        }
    }
    Ok(BruteForceResult { winning: false, witness: None, explored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::corpus;
    use num_bigint::BigInt;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn chain(rows: Vec<Vec<(usize, BigRational)>>, targets: &[usize]) -> MarkovChain {
        let n = rows.len();
        MarkovChain { rows, targets: StateSet::from_iter(n, targets.iter().copied()) }
    }

    #[test]
    fn geometric_retry_reaches_surely() {
        // s0 -> 1/2 target, 1/2 s0.
        let c =
            chain(vec![vec![(1, ratio(1, 2)), (0, ratio(1, 2))], vec![(1, ratio(1, 1))]], &[1]);
        assert_eq!(markov_chain_reach_prob(&c, 0), ratio(1, 1));
    }

    #[test]
    fn coin_flip_into_dead_sink() {
        let c = chain(
            vec![
                vec![(1, ratio(1, 2)), (2, ratio(1, 2))],
                vec![(1, ratio(1, 1))],
                vec![(2, ratio(1, 1))],
            ],
            &[1],
        );
        assert_eq!(markov_chain_reach_prob(&c, 0), ratio(1, 2));
        assert_eq!(min_steps_to_target(&c, 0), Some(1));
        assert_eq!(min_steps_to_target(&c, 2), None);
    }

    #[test]
    fn reach_probs_satisfy_linear_equations() {
        let c = chain(
            vec![
                vec![(1, ratio(1, 3)), (2, ratio(1, 3)), (0, ratio(1, 3))],
                vec![(3, ratio(1, 4)), (0, ratio(3, 4))],
                vec![(2, ratio(1, 1))],
                vec![(3, ratio(1, 1))],
            ],
            &[3],
        );
        let probs = markov_chain_reach_probs(&c);
        for i in 0..c.n_states() {
            if c.targets.contains(i) {
                assert_eq!(probs[i], ratio(1, 1));
                continue;
            }
            let rhs: BigRational = c.rows[i]
                .iter()
                .map(|(j, p)| p * &probs[*j])
                .fold(BigRational::zero(), |a, b| a + b);
            assert_eq!(probs[i], rhs, "fixpoint equation violated at {i}");
        }
        // State 2 is a dead sink.
        assert_eq!(probs[2], ratio(0, 1));
    }

    #[test]
    fn buchi_probability_via_bottom_components() {
        // s0 splits between an absorbing target and a target-free cycle.
        let c = chain(
            vec![
                vec![(1, ratio(1, 2)), (2, ratio(1, 2))],
                vec![(1, ratio(1, 1))],
                vec![(3, ratio(1, 1))],
                vec![(2, ratio(1, 1))],
            ],
            &[1],
        );
        assert_eq!(markov_chain_buchi_probs(&c)[0], ratio(1, 2));
        // A transient target does not count.
        let c2 = chain(c.rows.clone(), &[0]);
        assert_eq!(markov_chain_buchi_probs(&c2)[0], ratio(0, 1));
    }

    #[test]
    fn example2_constant_strategy_minimum_zero() {
        let (arena, obj, start) = corpus::corpus_arena("example2").unwrap();
        let eve =
            FiniteMemoryStrategy { machine: MooreMachine::constant(0, arena.eve_partition.len()) };
        let start = start.unwrap();
        let mdp = fix_eve_build_mdp(&arena, &eve, &start, &obj.final_states);
        let (min, witness) = min_reach_over_adam(&mdp, DEFAULT_BUDGET).unwrap();
        assert_eq!(min, ratio(0, 1));
        assert!(!is_positively_winning(&mdp));
        // The minimizer indeed confines the play.
        let probs = markov_chain_reach_probs(&chain_under_choice(&mdp, &witness.row_indices));
        assert_eq!(probs[mdp.starts[0]], ratio(0, 1));

        let (min_b, _) = min_buchi_over_adam(&mdp, DEFAULT_BUDGET).unwrap();
        assert_eq!(min_b, ratio(0, 1));
        assert!(almost_sure_buchi_witness(&mdp).is_some());
    }

    #[test]
    fn no_adversary_choice_reduces_to_plain_chain() {
        // fig2b has a single adversary action: the minimum equals the single
        // chain's probability.
        let (arena, obj, start) = corpus::corpus_arena("fig2b").unwrap();
        let a = arena.eve_action_index("a").unwrap();
        let eve =
            FiniteMemoryStrategy { machine: MooreMachine::constant(a, arena.eve_partition.len()) };
        let mdp = fix_eve_build_mdp(&arena, &eve, start.as_ref().unwrap(), &obj.final_states);
        assert_eq!(mdp.n_adversary_choices(), 1);
        let (min, choice) = min_reach_over_adam(&mdp, DEFAULT_BUDGET).unwrap();
        assert_eq!(min, ratio(1, 2));
        let direct =
            markov_chain_reach_probs(&chain_under_choice(&mdp, &choice.row_indices));
        assert_eq!(direct[mdp.starts[0]], ratio(1, 2));
    }

    #[test]
    fn confinement_region_matches_enumeration_on_example2() {
        let (arena, obj, start) = corpus::corpus_arena("example2").unwrap();
        for action in 0..2 {
            let eve = FiniteMemoryStrategy {
                machine: MooreMachine::constant(action, arena.eve_partition.len()),
            };
            let mdp = fix_eve_build_mdp(&arena, &eve, start.as_ref().unwrap(), &obj.final_states);
            let (min, _) = min_reach_over_adam(&mdp, DEFAULT_BUDGET).unwrap();
            let region = adversary_confinement_region(&mdp);
            assert_eq!(min.is_zero(), mdp.starts.iter().any(|&s| region.contains(s)));
        }
    }

    #[test]
    fn brute_force_example2_no_at_bound_four() {
        let (arena, obj, start) = corpus::corpus_arena("example2").unwrap();
        let start = Knowledge::new(&arena, start.unwrap()).unwrap();
        let result = brute_force_eve(
            &arena,
            &obj.final_states,
            BruteObjective::PositiveReach,
            4,
            &start,
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert!(!result.winning);

        let result = brute_force_eve(
            &arena,
            &obj.final_states,
            BruteObjective::AlmostSureBuchi,
            3,
            &start,
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert!(!result.winning);
    }

    #[test]
    fn brute_force_fig1_finds_witness() {
        let (arena, obj, _) = corpus::corpus_arena("fig1").unwrap();
        let middle: Vec<StateId> =
            ["s1", "s2", "s3", "s4"].iter().map(|n| arena.state_index(n).unwrap()).collect();
        let start = Knowledge::from_states(&arena, &middle).unwrap();
        let result = brute_force_eve(
            &arena,
            &obj.final_states,
            BruteObjective::PositiveReach,
            16,
            &start,
            DEFAULT_BUDGET,
        )
        .unwrap();
        assert!(result.winning);
        let witness = result.witness.unwrap();
        let mdp = fix_eve_build_mdp(&arena, &witness, start.set(), &obj.final_states);
        let (min, _) = min_reach_over_adam(&mdp, DEFAULT_BUDGET).unwrap();
        assert!(min.is_positive());
    }

    #[test]
    fn budget_guard_trips() {
        let (arena, obj, start) = corpus::corpus_arena("example2").unwrap();
        let start = Knowledge::new(&arena, start.unwrap()).unwrap();
        let err = brute_force_eve(
            &arena,
            &obj.final_states,
            BruteObjective::AlmostSureBuchi,
            3,
            &start,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, OracleError::BudgetExceeded { .. }));
    }
}
