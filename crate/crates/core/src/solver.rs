//! Outer block-coordinate loop: MMSE receivers, MSE weights, then the inner
//! ADMM precoder update, repeated until the WMMSE objective settles.
//!
//! Per outer iteration the receiver and weight updates cost
//! `O(K² N_r² N_t)` and `O(K N_r³)`. One inner ADMM iteration costs
//! `O(S · N_t · K² d²)` for `S` Gauss–Seidel sweeps of the precoder block plus
//! `O(K² d² N_t)` for the auxiliary and dual blocks.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::admm::{self, AdmmStatus, AdmmWorkspace};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{
    nats_to_bits, ChannelSet, PairGrid, PrecoderSet, SolveReport, SolveStatus, SolverState, ValidatedConfig,
};
use crate::wmmse;

/// Slack (bit/s/Hz) under which a reported rate still counts as meeting its target.
pub const QOS_REPORT_SLACK_BITS: f64 = 1e-3;
/// Share of the one-step reachable rate gain requested from a user whose
/// target is out of reach of the current surrogate.
pub const RELAXATION_FRACTION: f64 = 0.5;
/// Relative slack on per-antenna budgets in reports.
pub const PAPC_REPORT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Dominant right-singular directions of each user's channel.
    #[default]
    MatchedFilter,
    /// Complex Gaussian entries.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub init: InitStrategy,
    pub seed: u64,
    /// Print a progress line every `report_every` outer iterations (0 = never).
    pub report_every: usize,
    /// Start from these precoders instead of `init`.
    pub warm_start: Option<PrecoderSet>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            init: InitStrategy::MatchedFilter,
            seed: 0,
            report_every: 0,
            warm_start: None,
        }
    }
}

/// A PAPC-feasible starting point whose most-loaded antenna sits exactly at
/// its budget.
pub fn initialize_precoders(
    channels: &ChannelSet,
    cfg: &ValidatedConfig,
    strategy: InitStrategy,
    seed: u64,
) -> Result<PrecoderSet> {
    channels.check_against(cfg)?;
    let (nt, d) = (cfg.nt(), cfg.streams());
    let precoders = match strategy {
        InitStrategy::MatchedFilter => channels
            .iter()
            .map(|h| {
                let svd = h.clone().svd(false, true);
                let v_t = svd.v_t.expect("right singular vectors requested");
                let mut v = CMat::zeros(nt, d);
                for s in 0..d {
                    v.set_column(s, &v_t.row(s).adjoint());
                }
                v
            })
            .collect(),
        InitStrategy::Random => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..cfg.users())
                .map(|_| {
                    CMat::from_fn(nt, d, |_, _| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        c(re, im)
                    })
                })
                .collect()
        }
    };
    let mut set = PrecoderSet::new(precoders)?;
    set.scale_to_budgets(cfg.budgets());
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub precoders: PrecoderSet,
    pub report: SolveReport,
}

fn check_finite(state: &SolverState, iteration: usize, block: &'static str) -> Result<()> {
    let ok = match block {
        "receiver" => state.receivers.iter().all(linalg::is_finite),
        "weight" => state.weights.iter().all(linalg::is_finite),
        _ => {
            state.precoders.iter().all(linalg::is_finite)
                && state.aux.iter().all(linalg::is_finite)
                && state.duals.iter().all(linalg::is_finite)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration, block })
    }
}

/// Maximizes the weighted sum rate subject to QoS targets and per-antenna
/// budgets.
pub fn solve(channels: &ChannelSet, cfg: &ValidatedConfig, options: &SolveOptions) -> Result<Solution> {
    channels.check_against(cfg)?;
    let start = Instant::now();
    let precoders = match &options.warm_start {
        Some(v) => {
            if v.users() != cfg.users() || v.nt() != cfg.nt() || v.streams() != cfg.streams() {
                return Err(Error::Dimension("warm-start precoders do not match the configuration".into()));
            }
            v.clone()
        }
        None => initialize_precoders(channels, cfg, options.init, options.seed)?,
    };
    let noise = cfg.noise_power();
    let mut state = SolverState::new(precoders, cfg);
    let mut aux_ready = false;

    let mut objective_trace = Vec::new();
    let mut wsr_trace = Vec::new();
    let mut primal_residual_trace = Vec::new();
    let mut dual_residual_trace = Vec::new();
    let mut inner_iterations_trace = Vec::new();
    let mut infeasible_users = Vec::new();
    let mut status = SolveStatus::MaxIters;

    for iteration in 1..=cfg.config().outer_max_iters {
        state.receivers = wmmse::update_receivers(channels, &state.precoders, noise)?;
        check_finite(&state, iteration, "receiver")?;
        state.weights = wmmse::update_weights(&state.receivers, channels, &state.precoders)?;
        check_finite(&state, iteration, "weight")?;

        let mut ws = AdmmWorkspace::from_state(&state, channels, cfg)?;
        // Targets the surrogate cannot reach from here are approached
        // gradually; only persistent unreachability is reported.
        let relaxed = admm::relax_unreachable(&mut ws, cfg, RELAXATION_FRACTION);
        if !aux_ready {
            state.aux = ws.consensus_grid(&state.precoders);
            state.duals = PairGrid::zeros(cfg.users(), cfg.streams());
            aux_ready = true;
        }
        let last_feasible = state.precoders.clone();
        let outcome = admm::run_admm(&mut state, &ws, cfg)?;
        check_finite(&state, iteration, "precoder")?;

        if let AdmmStatus::InfeasibleQos { users } = outcome.status {
            state.precoders = last_feasible;
            infeasible_users = users;
            status = SolveStatus::InfeasibleQos;
            break;
        }

        let objective = wmmse::wmmse_objective(&state, channels, cfg)?;
        let (wsr, _) = wmmse::weighted_sum_rate(channels, &state.precoders, cfg)?;
        let prev = objective_trace.last().copied();
        objective_trace.push(objective);
        wsr_trace.push(nats_to_bits(wsr));
        primal_residual_trace.push(outcome.trace.primal_residual.last().copied().unwrap_or(0.0));
        dual_residual_trace.push(outcome.trace.dual_residual.last().copied().unwrap_or(0.0));
        inner_iterations_trace.push(outcome.iterations);

        if options.report_every > 0 && iteration % options.report_every == 0 {
            eprintln!(
                "iter {iteration:4}  objective {objective:.6e}  wsr {:.6} bit/s/Hz  inner {}",
                nats_to_bits(wsr),
                outcome.iterations
            );
        }
        let stalled = prev.is_some_and(|p| (objective - p).abs() <= cfg.config().outer_tol * p.abs().max(1.0));
        let last = iteration == cfg.config().outer_max_iters;
        if !relaxed.is_empty() && (stalled || last) {
            infeasible_users = relaxed;
            status = SolveStatus::InfeasibleQos;
            break;
        }
        if stalled {
            status = SolveStatus::Converged;
            break;
        }
    }

    let kkt = kkt_report(&state.precoders, channels, cfg)?;
    let iterations_used = objective_trace.len();
    let report = SolveReport {
        objective_trace,
        wsr_trace,
        primal_residual_trace,
        dual_residual_trace,
        inner_iterations_trace,
        per_user_rates_bits: kkt.rates_bits.clone(),
        qos_satisfied: kkt.qos_satisfied(),
        papc_satisfied: kkt.papc_satisfied(),
        infeasible_users,
        status,
        iterations_used,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok(Solution {
        precoders: state.precoders,
        report,
    })
}

/// Direct check of a precoder set against the original problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub antenna_powers: Vec<f64>,
    /// `power_m / P_m`.
    pub antenna_ratios: Vec<f64>,
    pub rates_bits: Vec<f64>,
    pub targets_bits: Vec<f64>,
    /// `rate_k − target_k`, bit/s/Hz.
    pub rate_margins_bits: Vec<f64>,
    pub wsr_bits: f64,
}

impl KktReport {
    pub fn papc_satisfied(&self) -> Vec<bool> {
        self.antenna_ratios.iter().map(|&r| r <= 1.0 + PAPC_REPORT_SLACK).collect()
    }
    pub fn qos_satisfied(&self) -> Vec<bool> {
        self.rate_margins_bits.iter().map(|&m| m >= -QOS_REPORT_SLACK_BITS).collect()
    }
    pub fn feasible(&self) -> bool {
        self.papc_satisfied().iter().all(|&b| b) && self.qos_satisfied().iter().all(|&b| b)
    }
    pub fn max_antenna_ratio(&self) -> f64 {
        self.antenna_ratios.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn kkt_report(precoders: &PrecoderSet, channels: &ChannelSet, cfg: &ValidatedConfig) -> Result<KktReport> {
    let antenna_powers = precoders.antenna_powers();
    let antenna_ratios = antenna_powers.iter().zip(cfg.budgets()).map(|(p, b)| p / b).collect();
    let (wsr, rates) = wmmse::weighted_sum_rate(channels, precoders, cfg)?;
    let rates_bits: Vec<f64> = rates.iter().map(|&r| nats_to_bits(r)).collect();
    let targets_bits = cfg.qos_targets_bits().to_vec();
    let rate_margins_bits = rates_bits.iter().zip(&targets_bits).map(|(r, t)| r - t).collect();
    Ok(KktReport {
        antenna_powers,
        antenna_ratios,
        rates_bits,
        targets_bits,
        rate_margins_bits,
        wsr_bits: nats_to_bits(wsr),
    })
}
