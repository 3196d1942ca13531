//! Domain types shared by every stage of the solver: the system
//! configuration, channel and precoder containers, the iterate state and the
//! solve report.
//!
//! Rates are carried in nats internally. [`SystemConfig`] takes QoS targets in
//! bit/s/Hz; [`SystemConfig::validate`] converts them once, and reports divide
//! by `ln 2` on the way out.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigErrors, Error, Result};
use crate::linalg::{self, CMat};

/// `P[W] = 10^(P[dBm]/10) / 1000`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * LN_2
}

/// Parses a power literal with an explicit unit: `"10 dBm"`, `"-90dBm"`,
/// `"0.5 W"`, `"2.5 mW"`. Returns watts.
pub fn parse_power(literal: &str) -> Result<f64, ConfigError> {
    let err = |reason: &str| ConfigError::PowerLiteral {
        literal: literal.to_string(),
        reason: reason.to_string(),
    };
    let s = literal.trim();
    let split = s
        .find(|ch: char| ch.is_ascii_alphabetic() && ch != 'e' && ch != 'E')
        .ok_or_else(|| err("missing unit suffix (dBm, W or mW)"))?;
    let (num, unit) = s.split_at(split);
    let value: f64 = num.trim().parse().map_err(|_| err("bad number"))?;
    if !value.is_finite() {
        return Err(err("not finite"));
    }
    match unit.trim() {
        "dBm" | "dbm" => Ok(dbm_to_watts(value)),
        "W" | "w" => Ok(value),
        "mW" | "mw" => Ok(value / 1000.0),
        other => Err(err(&format!("unknown unit {other:?}"))),
    }
}

/// Problem dimensions, budgets, priorities and algorithm tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_tx_antennas: usize,
    pub num_rx_antennas: usize,
    pub num_users: usize,
    pub num_streams: usize,
    /// Linear watts.
    pub noise_power: f64,
    /// Linear watts, one per transmit antenna.
    pub antenna_power_budgets: Vec<f64>,
    pub user_weights: Vec<f64>,
    /// bit/s/Hz.
    pub qos_targets_bits: Vec<f64>,
    pub admm_penalty: f64,
    pub outer_max_iters: usize,
    pub inner_max_iters: usize,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub bisection_tol: f64,
}

pub const DEFAULT_NOISE_DBM: f64 = -90.0;
pub const DEFAULT_OUTER_MAX_ITERS: usize = 100;
pub const DEFAULT_INNER_MAX_ITERS: usize = 50;
pub const DEFAULT_OUTER_TOL: f64 = 1e-5;
pub const DEFAULT_INNER_TOL: f64 = 1e-6;
pub const DEFAULT_BISECTION_TOL: f64 = 1e-10;

impl SystemConfig {
    /// Equal weights, zero QoS targets, `P_m = P_max / N_t`, −90 dBm noise and
    /// the default algorithm settings.
    pub fn uniform(
        num_tx_antennas: usize,
        num_rx_antennas: usize,
        num_users: usize,
        num_streams: usize,
        total_power_dbm: f64,
    ) -> Self {
        let per_antenna = dbm_to_watts(total_power_dbm) / num_tx_antennas.max(1) as f64;
        SystemConfig {
            num_tx_antennas,
            num_rx_antennas,
            num_users,
            num_streams,
            noise_power: dbm_to_watts(DEFAULT_NOISE_DBM),
            antenna_power_budgets: vec![per_antenna; num_tx_antennas],
            user_weights: vec![1.0; num_users],
            qos_targets_bits: vec![0.0; num_users],
            admm_penalty: 1.0,
            outer_max_iters: DEFAULT_OUTER_MAX_ITERS,
            inner_max_iters: DEFAULT_INNER_MAX_ITERS,
            outer_tol: DEFAULT_OUTER_TOL,
            inner_tol: DEFAULT_INNER_TOL,
            bisection_tol: DEFAULT_BISECTION_TOL,
        }
    }

    /// Checks every invariant and returns the validated config, or the full
    /// list of violations.
    pub fn validate(&self) -> Result<ValidatedConfig, ConfigErrors> {
        let mut errs = Vec::new();
        let dims = [
            ("num_tx_antennas", self.num_tx_antennas),
            ("num_rx_antennas", self.num_rx_antennas),
            ("num_users", self.num_users),
            ("num_streams", self.num_streams),
            ("outer_max_iters", self.outer_max_iters),
            ("inner_max_iters", self.inner_max_iters),
        ];
        for (field, v) in dims {
            if v == 0 {
                errs.push(ConfigError::ZeroDimension { field });
            }
        }
        let limit = self.num_rx_antennas.min(self.num_tx_antennas);
        if self.num_streams > limit {
            errs.push(ConfigError::StreamsExceedAntennas {
                streams: self.num_streams,
                limit,
            });
        }
        if self.num_users * self.num_streams > self.num_tx_antennas {
            errs.push(ConfigError::StreamsExceedTx {
                users: self.num_users,
                streams: self.num_streams,
                tx: self.num_tx_antennas,
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let scalars = [
            ("noise_power", self.noise_power),
            ("admm_penalty", self.admm_penalty),
            ("outer_tol", self.outer_tol),
            ("inner_tol", self.inner_tol),
            ("bisection_tol", self.bisection_tol),
        ];
        for (field, value) in scalars {
            if !positive(value) {
                errs.push(ConfigError::NonPositive { field, value });
            }
        }
        let mut check_vec = |field: &'static str, v: &[f64], len: usize| {
            if v.len() != len {
                errs.push(ConfigError::LengthMismatch {
                    field,
                    expected: len,
                    got: v.len(),
                });
            }
            for (index, &value) in v.iter().enumerate() {
                if !positive(value) {
                    errs.push(ConfigError::NonPositiveEntry { field, index, value });
                }
            }
        };
        check_vec(
            "antenna_power_budgets",
            &self.antenna_power_budgets,
            self.num_tx_antennas,
        );
        check_vec("user_weights", &self.user_weights, self.num_users);
        if self.qos_targets_bits.len() != self.num_users {
            errs.push(ConfigError::LengthMismatch {
                field: "qos_targets_bits",
                expected: self.num_users,
                got: self.qos_targets_bits.len(),
            });
        }
        for (index, &value) in self.qos_targets_bits.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                errs.push(ConfigError::NegativeQosTarget { index, value });
            }
        }
        if !errs.is_empty() {
            return Err(ConfigErrors(errs));
        }
        Ok(ValidatedConfig {
            qos_targets_nats: self.qos_targets_bits.iter().map(|&b| bits_to_nats(b)).collect(),
            config: self.clone(),
        })
    }
}

/// A [`SystemConfig`] that passed validation, with QoS targets in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SystemConfig,
    qos_targets_nats: Vec<f64>,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }
    pub fn nt(&self) -> usize {
        self.config.num_tx_antennas
    }
    pub fn nr(&self) -> usize {
        self.config.num_rx_antennas
    }
    pub fn users(&self) -> usize {
        self.config.num_users
    }
    pub fn streams(&self) -> usize {
        self.config.num_streams
    }
    pub fn noise_power(&self) -> f64 {
        self.config.noise_power
    }
    pub fn budgets(&self) -> &[f64] {
        &self.config.antenna_power_budgets
    }
    pub fn weights(&self) -> &[f64] {
        &self.config.user_weights
    }
    pub fn qos_targets_nats(&self) -> &[f64] {
        &self.qos_targets_nats
    }
    pub fn qos_targets_bits(&self) -> &[f64] {
        &self.config.qos_targets_bits
    }
    pub fn rho(&self) -> f64 {
        self.config.admm_penalty
    }

    /// Same system, different QoS targets (bit/s/Hz).
    pub fn with_qos_targets_bits(&self, targets: &[f64]) -> Result<ValidatedConfig, ConfigErrors> {
        let mut cfg = self.config.clone();
        cfg.qos_targets_bits = targets.to_vec();
        cfg.validate()
    }

    pub fn without_qos(&self) -> ValidatedConfig {
        let mut out = self.clone();
        out.config.qos_targets_bits.iter_mut().for_each(|t| *t = 0.0);
        out.qos_targets_nats.iter_mut().for_each(|t| *t = 0.0);
        out
    }

    /// Copy with altered algorithm settings; dimensions and budgets unchanged.
    pub fn with_iterations(&self, outer: usize, inner: usize) -> ValidatedConfig {
        let mut out = self.clone();
        out.config.outer_max_iters = outer.max(1);
        out.config.inner_max_iters = inner.max(1);
        out
    }
}

/// The K downlink channels, each `N_r × N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    channels: Vec<CMat>,
}

impl ChannelSet {
    pub fn new(channels: Vec<CMat>) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::Dimension("channel set is empty".into()));
        };
        let (nr, nt) = first.shape();
        for (k, h) in channels.iter().enumerate() {
            if h.shape() != (nr, nt) {
                return Err(Error::Dimension(format!(
                    "channel {k} is {:?}, expected {:?}",
                    h.shape(),
                    (nr, nt)
                )));
            }
            if !linalg::is_finite(h) {
                return Err(Error::Dimension(format!("channel {k} has non-finite entries")));
            }
        }
        Ok(ChannelSet { channels })
    }

    pub fn check_against(&self, cfg: &ValidatedConfig) -> Result<()> {
        if self.users() != cfg.users() || self.nr() != cfg.nr() || self.nt() != cfg.nt() {
            return Err(Error::Dimension(format!(
                "channels are {}×({}×{}), config expects {}×({}×{})",
                self.users(),
                self.nr(),
                self.nt(),
                cfg.users(),
                cfg.nr(),
                cfg.nt()
            )));
        }
        Ok(())
    }

    pub fn get(&self, k: usize) -> &CMat {
        &self.channels[k]
    }
    pub fn iter(&self) -> impl Iterator<Item = &CMat> {
        self.channels.iter()
    }
    pub fn users(&self) -> usize {
        self.channels.len()
    }
    pub fn nr(&self) -> usize {
        self.channels[0].nrows()
    }
    pub fn nt(&self) -> usize {
        self.channels[0].ncols()
    }

    /// All channels stacked row-wise, `(K·N_r) × N_t`.
    pub fn stacked(&self) -> CMat {
        let (nr, nt) = (self.nr(), self.nt());
        let mut out = CMat::zeros(self.users() * nr, nt);
        for (k, h) in self.channels.iter().enumerate() {
            out.view_mut((k * nr, 0), (nr, nt)).copy_from(h);
        }
        out
    }
}

/// The K precoders, each `N_t × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    precoders: Vec<CMat>,
}

impl PrecoderSet {
    pub fn new(precoders: Vec<CMat>) -> Result<Self> {
        let Some(first) = precoders.first() else {
            return Err(Error::Dimension("precoder set is empty".into()));
        };
        let shape = first.shape();
        if let Some(k) = precoders.iter().position(|v| v.shape() != shape) {
            return Err(Error::Dimension(format!("precoder {k} shape differs from precoder 0")));
        }
        Ok(PrecoderSet { precoders })
    }

    pub fn zeros(cfg: &ValidatedConfig) -> Self {
        PrecoderSet {
            precoders: vec![CMat::zeros(cfg.nt(), cfg.streams()); cfg.users()],
        }
    }

    pub fn get(&self, k: usize) -> &CMat {
        &self.precoders[k]
    }
    pub fn get_mut(&mut self, k: usize) -> &mut CMat {
        &mut self.precoders[k]
    }
    pub fn iter(&self) -> impl Iterator<Item = &CMat> {
        self.precoders.iter()
    }
    pub fn users(&self) -> usize {
        self.precoders.len()
    }
    pub fn nt(&self) -> usize {
        self.precoders[0].nrows()
    }
    pub fn streams(&self) -> usize {
        self.precoders[0].ncols()
    }
    pub fn into_inner(self) -> Vec<CMat> {
        self.precoders
    }

    /// `Σ_k [V_k V_k^H]_{m,m}` for each antenna `m`.
    pub fn antenna_powers(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.nt()];
        for v in &self.precoders {
            for (m, row) in v.row_iter().enumerate() {
                p[m] += row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        p
    }

    pub fn total_power(&self) -> f64 {
        self.precoders.iter().map(linalg::frob_sq).sum()
    }

    /// `max_m power_m / P_m`.
    pub fn max_antenna_ratio(&self, budgets: &[f64]) -> f64 {
        self.antenna_powers()
            .iter()
            .zip(budgets)
            .map(|(p, b)| p / b)
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.precoders {
            *v *= linalg::c(factor, 0.0);
        }
    }

    /// Common scalar rescale so the most-loaded antenna sits exactly at its
    /// budget. A zero precoder set is left untouched.
    pub fn scale_to_budgets(&mut self, budgets: &[f64]) {
        let ratio = self.max_antenna_ratio(budgets);
        if ratio > 0.0 {
            self.scale(1.0 / ratio.sqrt());
        }
    }
}

/// Row-major `K × K` grid of `d × d` matrices indexed by `(k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrid {
    users: usize,
    data: Vec<CMat>,
}

impl PairGrid {
    pub fn zeros(users: usize, d: usize) -> Self {
        PairGrid {
            users,
            data: vec![CMat::zeros(d, d); users * users],
        }
    }
    pub fn from_fn(users: usize, mut f: impl FnMut(usize, usize) -> CMat) -> Self {
        let mut data = Vec::with_capacity(users * users);
        for k in 0..users {
            for j in 0..users {
                data.push(f(k, j));
            }
        }
        PairGrid { users, data }
    }
    pub fn users(&self) -> usize {
        self.users
    }
    pub fn get(&self, k: usize, j: usize) -> &CMat {
        &self.data[k * self.users + j]
    }
    pub fn get_mut(&mut self, k: usize, j: usize) -> &mut CMat {
        &mut self.data[k * self.users + j]
    }
    pub fn set(&mut self, k: usize, j: usize, m: CMat) {
        self.data[k * self.users + j] = m;
    }
    pub fn row(&self, k: usize) -> &[CMat] {
        &self.data[k * self.users..(k + 1) * self.users]
    }
    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(linalg::frob_sq).sum()
    }
    pub fn iter(&self) -> impl Iterator<Item = &CMat> {
        self.data.iter()
    }
}

/// All iterates of the BCD/ADMM solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub precoders: PrecoderSet,
    /// `U_k`, `N_r × d`.
    pub receivers: Vec<CMat>,
    /// `W_k`, `d × d` Hermitian.
    pub weights: Vec<CMat>,
    /// `X_{k,j}`.
    pub aux: PairGrid,
    /// Scaled duals `λ_{k,j}`.
    pub duals: PairGrid,
}

impl SolverState {
    /// Zero receivers, identity weights, zero auxiliaries and duals.
    pub fn new(precoders: PrecoderSet, cfg: &ValidatedConfig) -> Self {
        let (k, d) = (cfg.users(), cfg.streams());
        SolverState {
            precoders,
            receivers: vec![CMat::zeros(cfg.nr(), d); k],
            weights: vec![linalg::identity(d); k],
            aux: PairGrid::zeros(k, d),
            duals: PairGrid::zeros(k, d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    InfeasibleQos,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::InfeasibleQos => "infeasible_qos",
        }
    }
}

/// Per-iteration traces and final diagnostics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// P2 (WMMSE) objective after each outer iteration, nats.
    pub objective_trace: Vec<f64>,
    /// Weighted sum rate after each outer iteration, bit/s/Hz.
    pub wsr_trace: Vec<f64>,
    /// Final inner primal residual of each outer iteration.
    pub primal_residual_trace: Vec<f64>,
    /// Final inner dual residual of each outer iteration.
    pub dual_residual_trace: Vec<f64>,
    /// Inner ADMM iterations spent in each outer iteration.
    pub inner_iterations_trace: Vec<usize>,
    pub per_user_rates_bits: Vec<f64>,
    pub qos_satisfied: Vec<bool>,
    pub papc_satisfied: Vec<bool>,
    pub infeasible_users: Vec<usize>,
    pub status: SolveStatus,
    pub iterations_used: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl SolveReport {
    pub fn final_wsr_bits(&self) -> f64 {
        self.wsr_trace.last().copied().unwrap_or(0.0)
    }

    /// Everything except wall time, for determinism checks.
    pub fn same_numbers(&self, other: &SolveReport) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        a == b
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}
