//! Bundled game instances used by the test suite and available through
//! `corpus emit`.
//!
//! - `example2`: a two-state concurrent reachability game with perfect
//!   information on both sides where the adversary can mirror any pure
//!   strategy, so no pure strategy wins even with positive probability.
//! - `fig1`: a six-state game where Eve cannot distinguish the four middle
//!   states but wins surely with two well-chosen moves.
//! - `fig2a`: a two-state blind game whose belief sequence under the action
//!   word a,b,b cycles through three different knowledge sets.
//! - `fig2b`: a seven-state solitaire game where every strategy that only
//!   depends on the current belief wins with probability exactly 1/2, while
//!   a four-move alternating strategy wins surely.
//! - `hide-or-run`: the snowball safety game; winning it requires
//!   randomisation, so it ships for the simulator only.
//! - `hide-or-run-modified`: the hide-or-run skeleton with an embedded
//!   word-guessing gadget and a cheat-detection branch; simulator only.

use thiserror::Error;

use crate::arena::{Arena, Objective};
use crate::bitset::StateSet;
use crate::cli::gamefile::{GameFile, ObjectiveEntry, ProbEntry, StartEntry, TransitionEntry, FORMAT_VERSION};

/// Names accepted by [`corpus_game`], in listing order.
pub const CORPUS_NAMES: [&str; 6] =
    ["example2", "fig1", "fig2a", "fig2b", "hide-or-run", "hide-or-run-modified"];

/// Instances whose interesting verdicts involve objectives outside the
/// decidable fragment; they are meant for the simulator, not the solver.
pub const SIMULATOR_ONLY: [&str; 2] = ["hide-or-run", "hide-or-run-modified"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown corpus instance `{0}`")]
pub struct UnknownInstance(pub String);

struct Builder {
    states: Vec<&'static str>,
    eve_actions: Vec<&'static str>,
    adam_actions: Vec<&'static str>,
    transitions: Vec<TransitionEntry>,
}

impl Builder {
    fn new(
        states: Vec<&'static str>,
        eve_actions: Vec<&'static str>,
        adam_actions: Vec<&'static str>,
    ) -> Self {
        Builder { states, eve_actions, adam_actions, transitions: Vec::new() }
    }

    /// Adds a deterministic transition.
    fn det(&mut self, from: &str, eve: &str, adam: &str, to: &str) {
        self.dist(from, eve, adam, &[(to, "1/1")]);
    }

    fn dist(&mut self, from: &str, eve: &str, adam: &str, to: &[(&str, &str)]) {
        self.transitions.push(TransitionEntry {
            from: from.into(),
            eve: eve.into(),
            adam: adam.into(),
            to: to
                .iter()
                .map(|(s, p)| ProbEntry { state: (*s).into(), prob: (*p).into() })
                .collect(),
        });
    }

    /// Same distribution for every Eve action, fixed Adam action.
    fn any_eve(&mut self, from: &str, adam: &str, to: &[(&str, &str)]) {
        for eve in self.eve_actions.clone() {
            self.dist(from, eve, adam, to);
        }
    }

    /// Same deterministic successor for every Adam action, fixed Eve action.
    fn any_adam(&mut self, from: &str, eve: &str, to: &str) {
        for adam in self.adam_actions.clone() {
            self.det(from, eve, adam, to);
        }
    }

    /// Same distribution for every Adam action, fixed Eve action.
    fn any_adam_dist(&mut self, from: &str, eve: &str, to: &[(&str, &str)]) {
        for adam in self.adam_actions.clone() {
            self.dist(from, eve, adam, to);
        }
    }

    /// Absorbing state: every action pair loops.
    fn sink(&mut self, state: &str) {
        for eve in self.eve_actions.clone() {
            self.any_adam(state, eve, state);
        }
    }

    fn finish(
        self,
        eve_classes: Vec<Vec<&'static str>>,
        adam_perfect: bool,
        objective_kind: &str,
        final_states: Vec<&'static str>,
        start: Vec<&'static str>,
    ) -> GameFile {
        let own = |names: Vec<Vec<&'static str>>| -> Vec<Vec<String>> {
            names.into_iter().map(|c| c.into_iter().map(String::from).collect()).collect()
        };
        let adam_classes: Vec<Vec<&'static str>> = if adam_perfect {
            self.states.iter().map(|s| vec![*s]).collect()
        } else {
            vec![self.states.clone()]
        };
        GameFile {
            format_version: FORMAT_VERSION,
            states: self.states.iter().map(|s| (*s).into()).collect(),
            eve_actions: self.eve_actions.iter().map(|s| (*s).into()).collect(),
            adam_actions: self.adam_actions.iter().map(|s| (*s).into()).collect(),
            eve_classes: own(eve_classes),
            adam_classes: own(adam_classes),
            transitions: self.transitions,
            objective: ObjectiveEntry {
                kind: objective_kind.into(),
                final_states: final_states.into_iter().map(String::from).collect(),
            },
            start: Some(StartEntry { knowledge: start.into_iter().map(String::from).collect() }),
        }
    }
}

fn example2() -> GameFile {
    let mut b = Builder::new(vec!["q_w", "q_f"], vec!["0", "1"], vec!["0", "1"]);
    b.det("q_w", "0", "0", "q_w");
    b.det("q_w", "1", "1", "q_w");
    b.det("q_w", "0", "1", "q_f");
    b.det("q_w", "1", "0", "q_f");
    b.sink("q_f");
    b.finish(
        vec![vec!["q_w"], vec!["q_f"]],
        true,
        "reachability",
        vec!["q_f"],
        vec!["q_w"],
    )
}

fn fig1() -> GameFile {
    let mut b = Builder::new(vec!["s0", "s1", "s2", "s3", "s4", "f"], vec!["a", "b"], vec!["a", "b"]);
    b.any_eve("s0", "a", &[("s1", "1/2"), ("s2", "1/2")]);
    b.any_eve("s0", "b", &[("s3", "1/2"), ("s4", "1/2")]);
    // Middle states: one action escapes to f, the other loops in place.
    b.any_adam("s1", "a", "f");
    b.any_adam("s1", "b", "s1");
    b.any_adam("s2", "a", "s2");
    b.any_adam("s2", "b", "f");
    b.any_adam("s3", "a", "s3");
    b.any_adam("s3", "b", "f");
    b.any_adam("s4", "a", "f");
    b.any_adam("s4", "b", "s4");
    b.sink("f");
    b.finish(
        vec![vec!["s0"], vec!["s1", "s2", "s3", "s4"], vec!["f"]],
        true,
        "reachability",
        vec!["f"],
        vec!["s0"],
    )
}

fn fig2a() -> GameFile {
    let mut b = Builder::new(vec!["q0", "q1"], vec!["a", "b"], vec!["a", "b"]);
    b.any_adam("q0", "a", "q1");
    b.det("q0", "b", "a", "q0");
    b.det("q0", "b", "b", "q1");
    b.any_adam("q1", "a", "q1");
    b.any_adam("q1", "b", "q0");
    b.finish(vec![vec!["q0", "q1"]], true, "reachability", vec!["q0"], vec!["q0", "q1"])
}

fn fig2b() -> GameFile {
    let mut b = Builder::new(
        vec!["s0", "s1", "s2", "t1", "t2", "f1", "f2"],
        vec!["a", "b"],
        vec!["x"],
    );
    b.any_eve("s0", "x", &[("s1", "1/2"), ("s2", "1/2")]);
    b.det("s1", "a", "x", "f1");
    b.det("s1", "b", "x", "t1");
    b.det("s2", "a", "x", "t2");
    b.det("s2", "b", "x", "f2");
    for s in ["t1", "f1"] {
        for eve in ["a", "b"] {
            b.det(s, eve, "x", "s1");
        }
    }
    for s in ["t2", "f2"] {
        for eve in ["a", "b"] {
            b.det(s, eve, "x", "s2");
        }
    }
    b.finish(
        vec![vec!["s0"], vec!["s1", "s2"], vec!["t1", "t2", "f1", "f2"]],
        true,
        "reachability",
        vec!["f1", "f2"],
        vec!["s0"],
    )
}

fn hide_or_run() -> GameFile {
    let mut b = Builder::new(vec!["s_hide", "s_home", "s_wet"], vec!["w", "t"], vec!["h", "r"]);
    b.det("s_hide", "w", "h", "s_hide");
    b.det("s_hide", "w", "r", "s_home");
    b.det("s_hide", "t", "h", "s_home");
    b.det("s_hide", "t", "r", "s_wet");
    b.sink("s_home");
    b.sink("s_wet");
    b.finish(
        vec![vec!["s_hide", "s_home", "s_wet"]],
        true,
        "safety",
        vec!["s_home"],
        vec!["s_hide"],
    )
}

/// The modified hide-or-run skeleton, instantiated with a two-state
/// word-guessing gadget embedded once per adversary branch. The letter
/// action `x` mixes the gadget; `stop` resolves the current branch the way
/// waiting or throwing resolved the original game. The cheat branch punishes
/// strategies that stop only finitely often: refusing to stop there loses
/// almost surely.
fn hide_or_run_modified() -> GameFile {
    let mut b = Builder::new(
        vec!["s_hide", "r_p0", "r_p1", "h_p0", "h_p1", "s_c", "s_w", "s_l", "s_home", "s_wet"],
        vec!["x", "stop"],
        vec!["h", "r", "cheat"],
    );
    for eve in ["x", "stop"] {
        b.det("s_hide", eve, "r", "r_p0");
        b.det("s_hide", eve, "h", "h_p0");
        b.det("s_hide", eve, "cheat", "s_c");
    }
    // Branch r: stopping while the gadget accepts behaves like waiting
    // against a runner (home); stopping while it rejects hits him (wet).
    b.any_adam_dist("r_p0", "x", &[("r_p0", "1/2"), ("r_p1", "1/2")]);
    b.any_adam("r_p0", "stop", "s_wet");
    b.any_adam("r_p1", "x", "r_p1");
    b.any_adam("r_p1", "stop", "s_home");
    // Branch h: stopping while accepting behaves like waiting against a
    // hider (back to hide); stopping while rejecting throws at a hider.
    b.any_adam_dist("h_p0", "x", &[("h_p0", "1/2"), ("h_p1", "1/2")]);
    b.any_adam("h_p0", "stop", "s_home");
    b.any_adam("h_p1", "x", "h_p1");
    b.any_adam("h_p1", "stop", "s_hide");
    // Cheat branch: stopping escapes to a safe sink, anything else drifts
    // into the losing sink with probability 1/2 per step.
    b.any_adam_dist("s_c", "x", &[("s_c", "1/2"), ("s_l", "1/2")]);
    b.any_adam("s_c", "stop", "s_w");
    for sink in ["s_w", "s_l", "s_home", "s_wet"] {
        b.sink(sink);
    }
    let all = vec![
        "s_hide", "r_p0", "r_p1", "h_p0", "h_p1", "s_c", "s_w", "s_l", "s_home", "s_wet",
    ];
    b.finish(vec![all], true, "safety", vec!["s_home", "s_l"], vec!["s_hide"])
}

fn lookup(name: &str) -> Result<GameFile, UnknownInstance> {
    match name {
        "example2" => Ok(example2()),
        "fig1" => Ok(fig1()),
        "fig2a" => Ok(fig2a()),
        "fig2b" => Ok(fig2b()),
        "hide-or-run" => Ok(hide_or_run()),
        "hide-or-run-modified" => Ok(hide_or_run_modified()),
        other => Err(UnknownInstance(other.into())),
    }
}

/// The named corpus instance as a game file, in canonical form.
pub fn corpus_game(name: &str) -> Result<GameFile, UnknownInstance> {
    let built = lookup(name)?;
    let loaded = built.load().unwrap_or_else(|e| panic!("corpus instance {name} is valid: {e}"));
    Ok(GameFile::from_game(&loaded.arena, &loaded.objective, loaded.start.as_ref()))
}

/// The named corpus instance, parsed and validated.
pub fn corpus_arena(name: &str) -> Result<(Arena, Objective, Option<StateSet>), UnknownInstance> {
    let gf = lookup(name)?;
    let loaded = gf.load().unwrap_or_else(|e| panic!("corpus instance {name} is valid: {e}"));
    Ok((loaded.arena, loaded.objective, loaded.start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{InfoOrdering, ObjectiveKind};

    #[test]
    fn all_instances_validate() {
        for name in CORPUS_NAMES {
            let (arena, _, start) = corpus_arena(name).unwrap();
            assert!(start.is_some(), "{name} declares a start knowledge");
            assert_eq!(arena.info_ordering(), InfoOrdering::AdamPerfect, "{name}");
        }
    }

    #[test]
    fn example2_structure() {
        let (arena, obj, start) = corpus_arena("example2").unwrap();
        assert_eq!(arena.n_states(), 2);
        assert_eq!(obj.kind, ObjectiveKind::Reachability);
        let qw = arena.state_index("q_w").unwrap();
        let qf = arena.state_index("q_f").unwrap();
        assert_eq!(start.unwrap(), StateSet::singleton(2, qw));
        // Matching actions stay, mismatching actions escape.
        let zero = arena.eve_action_index("0").unwrap();
        let one = arena.eve_action_index("1").unwrap();
        assert_eq!(arena.support(qw, zero, one), &StateSet::singleton(2, qf));
        assert_eq!(arena.support(qw, zero, zero), &StateSet::singleton(2, qw));
        for e in [zero, one] {
            for a in [zero, one] {
                assert_eq!(arena.support(qf, e, a), &StateSet::singleton(2, qf));
            }
        }
    }

    #[test]
    fn fig1_structure() {
        let (arena, obj, _) = corpus_arena("fig1").unwrap();
        assert_eq!(arena.n_states(), 6);
        let f = arena.state_index("f").unwrap();
        assert!(obj.final_states.contains(f));
        assert_eq!(arena.eve_partition.len(), 3);
    }
}
