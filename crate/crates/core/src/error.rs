use std::fmt;

use thiserror::Error;

/// A single violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be a positive integer")]
    ZeroDimension { field: &'static str },
    #[error("K·d exceeds N_t ({users}·{streams} > {tx})")]
    StreamsExceedTx { users: usize, streams: usize, tx: usize },
    #[error("d exceeds min(N_r, N_t) ({streams} > {limit})")]
    StreamsExceedAntennas { streams: usize, limit: usize },
    #[error("{field} has length {got}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{field}[{index}] must be strictly positive and finite (got {value})")]
    NonPositiveEntry {
        field: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{field} must be strictly positive and finite (got {value})")]
    NonPositive { field: &'static str, value: f64 },
    #[error("qos_targets_bits[{index}] must be non-negative and finite (got {value})")]
    NegativeQosTarget { index: usize, value: f64 },
    #[error("invalid power literal {literal:?}: {reason}")]
    PowerLiteral { literal: String, reason: String },
    #[error("{0}")]
    Other(String),
}

/// Every invariant a configuration violates, in detection order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn contains(&self, pred: impl Fn(&ConfigError) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigErrors),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("noise power must be positive (got {0})")]
    NonPositiveNoise(f64),
    #[error("power budget must be positive (got {0})")]
    NonPositiveBudget(f64),
    #[error("degenerate geometry for user {user}: I - U^H H V has condition number {condition:e}")]
    DegenerateGeometry { user: usize, condition: f64 },
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },
    #[error("QoS target unreachable for users {users:?}")]
    InfeasibleQos { users: Vec<usize> },
    #[error("stacked channel is rank deficient (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("non-finite value at outer iteration {iteration} in the {block} update")]
    NonFinite { iteration: usize, block: &'static str },
    #[error("channel file: {0}")]
    ChannelFormat(String),
    #[error("spec file: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
