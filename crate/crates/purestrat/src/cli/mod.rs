//! File formats, bundled instances, and command implementations.
//!
//! The binary exposes four subcommands: `validate`, `solve`, `verify` and
//! `corpus`. Exit codes are part of the contract: 0 success/yes, 1 no,
//! 2 invalid input, 3 unsupported information ordering, 4 enumeration budget
//! exceeded. Results go to standard output, diagnostics to standard error.
//! The environment variable `PURESTRAT_BUDGET` overrides the default
//! enumeration budget of the oracle.

pub mod commands;
pub mod corpus;
pub mod gamefile;


pub use gamefile::{GameFile, StrategyFile};
