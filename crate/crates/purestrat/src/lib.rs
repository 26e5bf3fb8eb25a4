//! Solver and verification toolkit for concurrent stochastic games with
//! imperfect information under pure (non-randomised) strategies.
//!
//! The toolkit decides, for a finite concurrent arena where the adversary is
//! perfectly informed or more informed than the protagonist:
//!
//! - whether the protagonist wins a reachability objective with positive
//!   probability ([`positive_reach`]),
//! - whether she wins a Büchi objective (or reachability, by making final
//!   states absorbing) with probability one ([`buchi_as`]),
//!
//! and synthesizes explicit finite-memory witness strategies. Every winning
//! verdict can be cross-checked by an exact brute-force oracle ([`oracle`])
//! that fixes strategies, builds finite products, and solves the resulting
//! Markov chains with arbitrary-precision rational arithmetic. A seeded
//! simulator ([`strategy`]) provides empirical sanity checks.
//!
//! All probabilities are exact rationals; no floating point enters the solver
//! or the oracle.

pub mod arena;
pub mod bitset;
pub mod buchi_as;
pub mod cli;
pub mod knowledge;
pub mod oracle;
pub mod positive_reach;
pub mod strategy;

pub use arena::{Arena, InfoOrdering, Objective, ObjectiveKind, RawArena, ValidationError};
pub use bitset::StateSet;
pub use knowledge::{ConstraintAutomaton, Knowledge};
pub use strategy::{AdamStrategy, FiniteMemoryStrategy, PlayRecord};
