//! Command-line front end for the cold-atom memory simulator: configuration
//! files in lab units, curve and report writers, and the subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;

pub use config::ScenarioConfig;
pub use parallel::PoolRunner;
