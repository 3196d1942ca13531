//! Downlink multi-user MIMO precoding that maximizes the weighted sum rate
//! under per-user rate targets and per-antenna power budgets.
//!
//! The solver alternates MMSE receiver and weight updates with an inner ADMM
//! precoder update; see [`solver::solve`]. [`baselines`] provides the
//! normalized zero-forcing and sum-power WMMSE comparisons, [`channel`] the
//! seeded channel ensembles and [`experiment`] the CSV-producing harness used
//! by the `qos-papc` binary.

pub mod admm;
pub mod baselines;
pub mod channel;
pub mod config_file;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod wmmse;

#[cfg(test)]
mod testutil;

pub use error::{ConfigError, ConfigErrors, Error, Result};
pub use model::{ChannelSet, PrecoderSet, SolveReport, SolveStatus, SolverState, SystemConfig, ValidatedConfig};
pub use solver::{solve, SolveOptions, Solution};
