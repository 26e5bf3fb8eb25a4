//! On-disk formats: game files and strategy files.
//!
//! Both formats are JSON objects with a fixed schema. Probabilities are
//! `"num/den"` strings with positive denominators; canonical output reduces
//! them to lowest terms, sorts every list by arena order and every object by
//! key, so the serialized bytes of a given game are deterministic.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{validate_arena, Arena, Objective, ObjectiveKind, Partition, RawArena};
use crate::bitset::StateSet;
use crate::strategy::{AdamStrategy, FiniteMemoryStrategy, MooreMachine};

pub const FORMAT_VERSION: u32 = 1;

/// JSON schema of a game description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub format_version: u32,
    pub states: Vec<String>,
    pub eve_actions: Vec<String>,
    pub adam_actions: Vec<String>,
    pub eve_classes: Vec<Vec<String>>,
    pub adam_classes: Vec<Vec<String>>,
    pub transitions: Vec<TransitionEntry>,
    pub objective: ObjectiveEntry,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<StartEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub eve: String,
    pub adam: String,
    pub to: Vec<ProbEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbEntry {
    pub state: String,
    /// Exact rational as `"num/den"`; a bare integer is accepted on input.
    pub prob: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveEntry {
    /// One of `reachability`, `safety`, `buchi`, `co-buchi`.
    pub kind: String,
    #[serde(rename = "final")]
    pub final_states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartEntry {
    pub knowledge: Vec<String>,
}

/// A fully parsed and validated game.
#[derive(Debug, Clone)]
pub struct LoadedGame {
    pub arena: Arena,
    pub objective: Objective,
    /// Declared start knowledge, if any; intra-class validity is checked by
    /// the commands that need it.
    pub start: Option<StateSet>,
}

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error("invalid rational `{text}`: {reason}")]
    Rational { text: String, reason: String },
    #[error("unknown objective kind `{0}`")]
    ObjectiveKind(String),
    #[error("unknown state `{name}` in {context}")]
    UnknownState { name: String, context: String },
    #[error("invalid arena:\n{}", .0.join("\n"))]
    Arena(Vec<String>),
}

/// Parses a `"num/den"` (or bare integer) string into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, GameFileError> {
    let err = |reason: &str| GameFileError::Rational { text: text.into(), reason: reason.into() };
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n, d),
        None => (text, "1"),
    };
    let num: BigInt = num.trim().parse().map_err(|_| err("bad numerator"))?;
    let den: BigInt = den.trim().parse().map_err(|_| err("bad denominator"))?;
    if !den.is_positive() {
        return Err(err("denominator must be positive"));
    }
    Ok(BigRational::new(num, den))
}

/// Formats a rational canonically: lowest terms, explicit positive
/// denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_objective_kind(kind: &str) -> Result<ObjectiveKind, GameFileError> {
    match kind {
        "reachability" => Ok(ObjectiveKind::Reachability),
        "safety" => Ok(ObjectiveKind::Safety),
        "buchi" => Ok(ObjectiveKind::Buchi),
        "co-buchi" => Ok(ObjectiveKind::CoBuchi),
        other => Err(GameFileError::ObjectiveKind(other.into())),
    }
}

pub fn objective_kind_name(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::Reachability => "reachability",
        ObjectiveKind::Safety => "safety",
        ObjectiveKind::Buchi => "buchi",
        ObjectiveKind::CoBuchi => "co-buchi",
    }
}

impl GameFile {
    pub fn from_json(text: &str) -> Result<Self, GameFileError> {
        serde_json::from_str(text).map_err(|e| GameFileError::Json(e.to_string()))
    }

    /// Canonical serialization: sorted keys, two-space indentation, trailing
    /// newline. The canonical bytes of a validated game are deterministic.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("game file serializes");
        // serde_json maps are BTree-backed, so re-serializing the value sorts
        // all object keys.
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    /// Validates the description into an arena, objective and start set.
    pub fn load(&self) -> Result<LoadedGame, GameFileError> {
        if self.format_version != FORMAT_VERSION {
            return Err(GameFileError::FormatVersion(self.format_version));
        }
        let mut raw = RawArena {
            states: self.states.clone(),
            eve_actions: self.eve_actions.clone(),
            adam_actions: self.adam_actions.clone(),
            eve_classes: self.eve_classes.clone(),
            adam_classes: self.adam_classes.clone(),
            ..RawArena::default()
        };
        for t in &self.transitions {
            let dist = t
                .to
                .iter()
                .map(|p| Ok((p.state.clone(), parse_rational(&p.prob)?)))
                .collect::<Result<Vec<_>, GameFileError>>()?;
            raw.transitions.push((t.from.clone(), t.eve.clone(), t.adam.clone(), dist));
        }
        let arena = validate_arena(&raw)
            .map_err(|errs| GameFileError::Arena(errs.iter().map(|e| e.to_string()).collect()))?;

        let kind = parse_objective_kind(&self.objective.kind)?;
        let mut final_states = StateSet::empty(arena.n_states());
        for name in &self.objective.final_states {
            let s = arena.state_index(name).ok_or_else(|| GameFileError::UnknownState {
                name: name.clone(),
                context: "objective.final".into(),
            })?;
            final_states.insert(s);
        }

        let start = match &self.start {
            None => None,
            Some(entry) => {
                let mut set = StateSet::empty(arena.n_states());
                for name in &entry.knowledge {
                    let s = arena.state_index(name).ok_or_else(|| GameFileError::UnknownState {
                        name: name.clone(),
                        context: "start.knowledge".into(),
                    })?;
                    set.insert(s);
                }
                Some(set)
            }
        };

        Ok(LoadedGame { arena, objective: Objective { kind, final_states }, start })
    }

    /// Rebuilds a canonical description from a validated game: transitions
    /// sorted by (state, eve, adam) index, distributions and classes by state
    /// index, rationals in lowest terms.
    pub fn from_game(arena: &Arena, objective: &Objective, start: Option<&StateSet>) -> GameFile {
        let names = |set: &StateSet| -> Vec<String> {
            set.iter().map(|s| arena.states[s].clone()).collect()
        };
        let classes = |p: &Partition| -> Vec<Vec<String>> {
            let mut out: Vec<(usize, Vec<String>)> = p
                .classes
                .iter()
                .map(|c| (c.first().expect("classes are non-empty"), names(c)))
                .collect();
            out.sort_by_key(|(first, _)| *first);
            out.into_iter().map(|(_, members)| members).collect()
        };
        let mut transitions = Vec::new();
        for s in 0..arena.n_states() {
            for e in 0..arena.n_eve_actions() {
                for a in 0..arena.n_adam_actions() {
                    transitions.push(TransitionEntry {
                        from: arena.states[s].clone(),
                        eve: arena.eve_actions[e].clone(),
                        adam: arena.adam_actions[a].clone(),
                        to: arena
                            .distribution(s, e, a)
                            .iter()
                            .map(|(t, p)| ProbEntry {
                                state: arena.states[*t].clone(),
                                prob: format_rational(p),
                            })
                            .collect(),
                    });
                }
            }
        }
        GameFile {
            format_version: FORMAT_VERSION,
            states: arena.states.clone(),
            eve_actions: arena.eve_actions.clone(),
            adam_actions: arena.adam_actions.clone(),
            eve_classes: classes(&arena.eve_partition),
            adam_classes: classes(&arena.adam_partition),
            transitions,
            objective: ObjectiveEntry {
                kind: objective_kind_name(objective.kind).into(),
                final_states: names(&objective.final_states),
            },
            start: start.map(|k| StartEntry { knowledge: names(k) }),
        }
    }
}

/// JSON schema of a finite-memory strategy: an explicit Moore-machine
/// listing. Update tables are keyed by observation-class name, which is the
/// name of the class's first state in arena order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyFile {
    pub format_version: u32,
    pub memory: Vec<String>,
    pub initial: String,
    pub output: BTreeMap<String, String>,
    pub update: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Error)]
pub enum StrategyFileError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unsupported format_version {0}")]
    FormatVersion(u32),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("duplicate memory state `{0}`")]
    DuplicateMemory(String),
    #[error("memory state `{name}` is missing its {table} entry{detail}")]
    Incomplete { name: String, table: &'static str, detail: String },
}

/// The canonical name of an observation class: its first state's name.
pub fn class_name(arena: &Arena, partition: &Partition, class: usize) -> String {
    let rep = partition.classes[class].first().expect("classes are non-empty");
    arena.states[rep].clone()
}

fn machine_to_file(
    arena: &Arena,
    partition: &Partition,
    actions: &[String],
    machine: &MooreMachine,
) -> StrategyFile {
    let memory: Vec<String> = (0..machine.n_memory()).map(|m| format!("m{m}")).collect();
    let mut output = BTreeMap::new();
    let mut update = BTreeMap::new();
    for m in 0..machine.n_memory() {
        output.insert(memory[m].clone(), actions[machine.output[m]].clone());
        let mut row = BTreeMap::new();
        for class in 0..partition.len() {
            row.insert(class_name(arena, partition, class), memory[machine.update[m][class]].clone());
        }
        update.insert(memory[m].clone(), row);
    }
    StrategyFile {
        format_version: FORMAT_VERSION,
        memory: memory.clone(),
        initial: memory[machine.initial].clone(),
        output,
        update,
    }
}

fn machine_from_file(
    arena: &Arena,
    partition: &Partition,
    actions: &[String],
    file: &StrategyFile,
) -> Result<MooreMachine, StrategyFileError> {
    if file.format_version != FORMAT_VERSION {
        return Err(StrategyFileError::FormatVersion(file.format_version));
    }
    let mut mem_index = BTreeMap::new();
    for (i, name) in file.memory.iter().enumerate() {
        if mem_index.insert(name.clone(), i).is_some() {
            return Err(StrategyFileError::DuplicateMemory(name.clone()));
        }
    }
    let initial = *mem_index
        .get(&file.initial)
        .ok_or_else(|| StrategyFileError::Unknown { kind: "memory state", name: file.initial.clone() })?;

    let mut output = Vec::with_capacity(file.memory.len());
    let mut update = Vec::with_capacity(file.memory.len());
    for name in &file.memory {
        let action_name = file.output.get(name).ok_or_else(|| StrategyFileError::Incomplete {
            name: name.clone(),
            table: "output",
            detail: String::new(),
        })?;
        let action = actions
            .iter()
            .position(|a| a == action_name)
            .ok_or_else(|| StrategyFileError::Unknown { kind: "action", name: action_name.clone() })?;
        output.push(action);

        let row = file.update.get(name).ok_or_else(|| StrategyFileError::Incomplete {
            name: name.clone(),
            table: "update",
            detail: String::new(),
        })?;
        let mut update_row = Vec::with_capacity(partition.len());
        for class in 0..partition.len() {
            let cname = class_name(arena, partition, class);
            let target = row.get(&cname).ok_or_else(|| StrategyFileError::Incomplete {
                name: name.clone(),
                table: "update",
                detail: format!(" for class `{cname}`"),
            })?;
            let t = *mem_index
                .get(target)
                .ok_or_else(|| StrategyFileError::Unknown { kind: "memory state", name: target.clone() })?;
            update_row.push(t);
        }
        update.push(update_row);
    }
    Ok(MooreMachine { initial, output, update })
}

impl StrategyFile {
    pub fn from_json(text: &str) -> Result<Self, StrategyFileError> {
        serde_json::from_str(text).map_err(|e| StrategyFileError::Json(e.to_string()))
    }

    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("strategy file serializes");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_eve_strategy(arena: &Arena, strategy: &FiniteMemoryStrategy) -> StrategyFile {
        machine_to_file(arena, &arena.eve_partition, &arena.eve_actions, &strategy.machine)
    }

    pub fn to_eve_strategy(&self, arena: &Arena) -> Result<FiniteMemoryStrategy, StrategyFileError> {
        let machine = machine_from_file(arena, &arena.eve_partition, &arena.eve_actions, self)?;
        Ok(FiniteMemoryStrategy { machine })
    }

    pub fn from_adam_strategy(arena: &Arena, strategy: &AdamStrategy) -> StrategyFile {
        machine_to_file(arena, &arena.adam_partition, &arena.adam_actions, &strategy.machine)
    }

    pub fn to_adam_strategy(&self, arena: &Arena) -> Result<AdamStrategy, StrategyFileError> {
        let machine = machine_from_file(arena, &arena.adam_partition, &arena.adam_actions, self)?;
        Ok(AdamStrategy { machine })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::corpus;

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("1/2").unwrap().to_string(), "1/2");
        assert_eq!(parse_rational("2/4").unwrap(), parse_rational("1/2").unwrap());
        assert_eq!(parse_rational("3").unwrap().to_string(), "3");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x/2").is_err());
        assert_eq!(format_rational(&parse_rational("2/4").unwrap()), "1/2");
    }

    #[test]
    fn corpus_games_round_trip() {
        for name in corpus::CORPUS_NAMES {
            let gf = corpus::corpus_game(name).unwrap();
            let text = gf.to_canonical_json();
            let parsed = GameFile::from_json(&text).unwrap();
            assert_eq!(parsed, gf, "round trip failed for {name}");
            // Canonical output is a fixpoint.
            let loaded = parsed.load().unwrap();
            let rebuilt =
                GameFile::from_game(&loaded.arena, &loaded.objective, loaded.start.as_ref());
            assert_eq!(rebuilt.to_canonical_json(), text, "canonical bytes differ for {name}");
        }
    }

    #[test]
    fn strategy_round_trip() {
        let (arena, _, _) = corpus::corpus_arena("fig1").unwrap();
        let machine = MooreMachine {
            initial: 0,
            output: vec![0, 1],
            update: vec![vec![1, 0, 1], vec![0, 0, 0]],
        };
        let strategy = FiniteMemoryStrategy { machine };
        let file = StrategyFile::from_eve_strategy(&arena, &strategy);
        let back = file.to_eve_strategy(&arena).unwrap();
        assert_eq!(back, strategy);
        let reparsed = StrategyFile::from_json(&file.to_canonical_json()).unwrap();
        assert_eq!(reparsed, file);
    }

    #[test]
    fn unknown_fields_rejected() {
        let gf = corpus::corpus_game("example2").unwrap();
        let mut value = serde_json::to_value(&gf).unwrap();
        value.as_object_mut().unwrap().insert("extra".into(), serde_json::json!(1));
        assert!(GameFile::from_json(&value.to_string()).is_err());
    }
}
