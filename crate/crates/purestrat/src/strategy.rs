//! Pure observation-based finite-memory strategies and their simulation.
//!
//! A strategy is a Moore machine over observation classes. The memory always
//! reflects the observations seen so far, including the class of the current
//! state: `output[m]` is the action played now, and `update[m][class]`
//! advances the memory on the class of the state the play moves to. The
//! initial memory therefore stands for "the play just started in the declared
//! start knowledge".
//!
//! Eve machines read Eve classes, Adam machines Adam classes. The induced play
//! function depends only on the observed class sequence, so strategies are
//! observation-based by construction.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::arena::{ActionId, Arena, ClassId, Objective, ObjectiveKind, StateId};
use crate::bitset::StateSet;

/// Index of a memory state.
pub type MemoryId = usize;

/// A deterministic Moore machine over observation classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MooreMachine {
    pub initial: MemoryId,
    /// Action emitted at each memory state.
    pub output: Vec<ActionId>,
    /// `update[m][class]` is the next memory after observing `class`.
    pub update: Vec<Vec<MemoryId>>,
}

impl MooreMachine {
    /// A single-state machine that plays `action` forever.
    pub fn constant(action: ActionId, n_classes: usize) -> Self {
        MooreMachine {
            initial: 0,
            output: vec![action],
            update: vec![vec![0; n_classes]],
        }
    }

    pub fn n_memory(&self) -> usize {
        self.output.len()
    }

    pub fn n_classes(&self) -> usize {
        self.update.first().map_or(0, Vec::len)
    }

    /// The action emitted at `m` and the memory reached on `class`.
    pub fn step(&self, m: MemoryId, class: ClassId) -> (ActionId, MemoryId) {
        (self.output[m], self.update[m][class])
    }

    /// Checks totality and in-range entries against an alphabet.
    pub fn validate(&self, n_actions: usize, n_classes: usize) -> Result<(), StrategyError> {
        let n = self.n_memory();
        if n == 0 || self.initial >= n || self.update.len() != n {
            return Err(StrategyError::Malformed);
        }
        for (m, row) in self.update.iter().enumerate() {
            if self.output[m] >= n_actions || row.len() != n_classes {
                return Err(StrategyError::Malformed);
            }
            if row.iter().any(|&t| t >= n) {
                return Err(StrategyError::Malformed);
            }
        }
        Ok(())
    }
}

/// Eve's strategy: a Moore machine over Eve observation classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMemoryStrategy {
    pub machine: MooreMachine,
}

/// Adam's strategy: a Moore machine over Adam observation classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdamStrategy {
    pub machine: MooreMachine,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("strategy tables are not total over the declared alphabet")]
    Malformed,
}

/// `(output(m), update(m, class))` for Eve's machine.
pub fn step_strategy(
    strategy: &FiniteMemoryStrategy,
    m: MemoryId,
    class: ClassId,
) -> (ActionId, MemoryId) {
    strategy.machine.step(m, class)
}

/// One sampled play: the per-step triples and the terminal state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayRecord {
    /// `(state, eve action, adam action)` for each step taken.
    pub steps: Vec<(StateId, ActionId, ActionId)>,
    /// State reached after the last step.
    pub terminal: StateId,
}

impl PlayRecord {
    /// State at position `i` (position 0 is the start state).
    pub fn state_at(&self, i: usize) -> StateId {
        if i < self.steps.len() {
            self.steps[i].0
        } else {
            debug_assert_eq!(i, self.steps.len());
            self.terminal
        }
    }

    /// Number of state positions, i.e. steps + 1.
    pub fn n_positions(&self) -> usize {
        self.steps.len() + 1
    }

    /// Positional final-state visit flags, position 0 included.
    pub fn f_visits(&self, final_states: &StateSet) -> Vec<bool> {
        (0..self.n_positions())
            .map(|i| final_states.contains(self.state_at(i)))
            .collect()
    }

    /// Whether the record satisfies `objective` within its own horizon.
    ///
    /// Reachability and safety are exact on the finite prefix. Büchi and
    /// co-Büchi cannot be decided on a finite path; they are approximated by
    /// visits after the half-way position, a heuristic used only by the
    /// simulator, never by the solver or the oracle.
    pub fn satisfies(&self, objective: &Objective) -> bool {
        let visits = self.f_visits(&objective.final_states);
        let half = self.steps.len() / 2;
        match objective.kind {
            ObjectiveKind::Reachability => visits.iter().any(|&v| v),
            ObjectiveKind::Safety => !visits.iter().any(|&v| v),
            ObjectiveKind::Buchi => visits.iter().skip(half + 1).any(|&v| v),
            ObjectiveKind::CoBuchi => !visits.iter().skip(half + 1).any(|&v| v),
        }
    }
}

/// Samples one play of exactly `max_steps` steps.
///
/// Successors are drawn by exact rational inversion: the distribution is put
/// over a common denominator and a uniform integer below it picks the entry,
/// so equal seeds give equal plays on every platform.
pub fn simulate(
    arena: &Arena,
    eve: &FiniteMemoryStrategy,
    adam: &AdamStrategy,
    start: StateId,
    max_steps: usize,
    seed: u64,
) -> PlayRecord {
    simulate_stream(arena, eve, adam, start, max_steps, seed, 0)
}

/// As [`simulate`], with an explicit RNG stream for independent runs.
pub fn simulate_stream(
    arena: &Arena,
    eve: &FiniteMemoryStrategy,
    adam: &AdamStrategy,
    start: StateId,
    max_steps: usize,
    seed: u64,
    stream: u64,
) -> PlayRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut state = start;
    let mut em = eve.machine.initial;
    let mut am = adam.machine.initial;
    let mut steps = Vec::with_capacity(max_steps);

    for _ in 0..max_steps {
        let ea = eve.machine.output[em];
        let aa = adam.machine.output[am];
        let next = sample_exact(arena.distribution(state, ea, aa), &mut rng);
        assert!(
            arena.support(state, ea, aa).contains(next),
            "sampled successor outside the support relation"
        );
        steps.push((state, ea, aa));
        em = eve.machine.update[em][arena.eve_class_of(next)];
        am = adam.machine.update[am][arena.adam_class_of(next)];
        state = next;
    }
    PlayRecord { steps, terminal: state }
}

fn sample_exact(dist: &[(StateId, num_rational::BigRational)], rng: &mut ChaCha8Rng) -> StateId {
    let lcm = dist
        .iter()
        .fold(BigUint::one(), |acc, (_, p)| acc.lcm(p.denom().magnitude()));
    let draw = rng.gen_biguint_below(&lcm);
    let mut cumulative = BigUint::zero();
    for (t, p) in dist {
        let weight = p.numer().magnitude() * (&lcm / p.denom().magnitude());
        cumulative += weight;
        if draw < cumulative {
            return *t;
        }
    }
    unreachable!("distribution sums to one");
}

/// Empirical frequency of `objective` over `runs` seeded plays of length
/// `horizon`. Run `i` draws from stream `i` of the seed, so runs are
/// independent and the whole estimate is reproducible.
pub fn estimate_objective(
    arena: &Arena,
    eve: &FiniteMemoryStrategy,
    adam: &AdamStrategy,
    start: StateId,
    objective: &Objective,
    runs: usize,
    horizon: usize,
    seed: u64,
) -> f64 {
    assert!(runs >= 1);
    let mut hits = 0usize;
    for run in 0..runs {
        let record = simulate_stream(arena, eve, adam, start, horizon, seed, run as u64);
        if record.satisfies(objective) {
            hits += 1;
        }
    }
    hits as f64 / runs as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{validate_arena, RawArena};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn ratio(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    /// `s` splits evenly between `s` and `t`; `t` is absorbing.
    fn coin_arena() -> Arena {
        validate_arena(&RawArena {
            states: vec!["s".into(), "t".into()],
            eve_actions: vec!["a".into(), "b".into()],
            adam_actions: vec!["x".into()],
            transitions: vec![
                ("s".into(), "a".into(), "x".into(), vec![("s".into(), ratio(1, 2)), ("t".into(), ratio(1, 2))]),
                ("s".into(), "b".into(), "x".into(), vec![("s".into(), ratio(1, 1))]),
                ("t".into(), "a".into(), "x".into(), vec![("t".into(), ratio(1, 1))]),
                ("t".into(), "b".into(), "x".into(), vec![("t".into(), ratio(1, 1))]),
            ],
            eve_classes: vec![vec!["s".into()], vec!["t".into()]],
            adam_classes: vec![vec!["s".into()], vec!["t".into()]],
        })
        .unwrap()
    }

    fn constant_eve(arena: &Arena, action: ActionId) -> FiniteMemoryStrategy {
        FiniteMemoryStrategy {
            machine: MooreMachine::constant(action, arena.eve_partition.len()),
        }
    }

    fn constant_adam(arena: &Arena) -> AdamStrategy {
        AdamStrategy { machine: MooreMachine::constant(0, arena.adam_partition.len()) }
    }

    #[test]
    fn deterministic_arena_ignores_seed() {
        let arena = coin_arena();
        let eve = constant_eve(&arena, 1); // plays b: stays in s forever
        let adam = constant_adam(&arena);
        let r1 = simulate(&arena, &eve, &adam, 0, 10, 1);
        let r2 = simulate(&arena, &eve, &adam, 0, 10, 999);
        assert_eq!(r1, r2);
        assert_eq!(r1.terminal, 0);
    }

    #[test]
    fn equal_seeds_reproduce() {
        let arena = coin_arena();
        let eve = constant_eve(&arena, 0);
        let adam = constant_adam(&arena);
        let r1 = simulate(&arena, &eve, &adam, 0, 50, 42);
        let r2 = simulate(&arena, &eve, &adam, 0, 50, 42);
        assert_eq!(r1, r2);
    }

    #[test]
    fn estimate_converges_to_reach_probability_one() {
        let arena = coin_arena();
        let eve = constant_eve(&arena, 0);
        let adam = constant_adam(&arena);
        let objective = Objective {
            kind: ObjectiveKind::Reachability,
            final_states: StateSet::singleton(2, 1),
        };
        // Reaching t within 64 steps fails with probability 2^-64.
        let freq = estimate_objective(&arena, &eve, &adam, 0, &objective, 200, 64, 7);
        assert_eq!(freq, 1.0);
    }

    #[test]
    fn record_positions_and_flags() {
        let arena = coin_arena();
        let eve = constant_eve(&arena, 0);
        let adam = constant_adam(&arena);
        let record = simulate(&arena, &eve, &adam, 0, 30, 3);
        let finals = StateSet::singleton(2, 1);
        let visits = record.f_visits(&finals);
        assert_eq!(visits.len(), 31);
        // Once t is reached the flags stay set: t is absorbing.
        if let Some(first) = visits.iter().position(|&v| v) {
            assert!(visits[first..].iter().all(|&v| v));
        }
    }
}
