//! Comparison precoders: normalized zero-forcing, sum-power WMMSE (plain and
//! normalized to the per-antenna budgets), and the proposed solver with every
//! QoS target switched off.
//!
//! Normalization is always one common scalar for all users and antennas, so
//! beam directions are left alone.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{nats_to_bits, ChannelSet, PrecoderSet, SolverState, ValidatedConfig};
use crate::solver::{self, InitStrategy, SolveOptions, Solution};
use crate::wmmse;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;
const MU_BISECTION_STEPS: usize = 200;

/// Pseudo-inverse precoder on the stacked channel with equal power per
/// stream, scaled so the most-loaded antenna meets its budget.
///
/// User `k` takes the first `d` columns of its `N_r`-wide block of the
/// pseudo-inverse.
pub fn zf_normalized(channels: &ChannelSet, cfg: &ValidatedConfig) -> Result<PrecoderSet> {
    channels.check_against(cfg)?;
    let (nr, d) = (cfg.nr(), cfg.streams());
    let stacked = channels.stacked();
    let required = stacked.nrows();
    let sv = stacked.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * top && s > 0.0).count();
    if rank < required {
        return Err(Error::RankDeficient { rank, required });
    }
    // H^H (H H^H)⁻¹
    let gram = linalg::hermitized(&stacked * stacked.adjoint());
    let pinv = stacked.adjoint() * linalg::hpd_inverse(&gram, "stacked channel Gram matrix")?;
    let precoders = (0..cfg.users())
        .map(|k| {
            let mut v = pinv.columns(k * nr, d).into_owned();
            for mut col in v.column_iter_mut() {
                let n = col.norm();
                col /= c(n, 0.0);
            }
            v
        })
        .collect();
    let mut set = PrecoderSet::new(precoders)?;
    set.scale_to_budgets(cfg.budgets());
    Ok(set)
}

/// Result of the sum-power WMMSE iteration.
#[derive(Debug, Clone)]
pub struct SpcSolution {
    pub precoders: PrecoderSet,
    /// WMMSE objective after each iteration.
    pub objective_trace: Vec<f64>,
    pub wsr_trace_bits: Vec<f64>,
}

/// Classic WMMSE under a single total-power budget.
pub fn wmmse_spc(channels: &ChannelSet, cfg: &ValidatedConfig, total_power: f64) -> Result<PrecoderSet> {
    Ok(wmmse_spc_traced(channels, cfg, total_power)?.precoders)
}

pub fn wmmse_spc_traced(channels: &ChannelSet, cfg: &ValidatedConfig, total_power: f64) -> Result<SpcSolution> {
    if !(total_power > 0.0) {
        return Err(Error::NonPositiveBudget(total_power));
    }
    let mut v = solver::initialize_precoders(channels, cfg, InitStrategy::MatchedFilter, 0)?;
    v.scale((total_power / v.total_power()).sqrt());
    let noise = cfg.noise_power();
    let mut objective_trace = Vec::new();
    let mut wsr_trace_bits = Vec::new();
    let mut prev_wsr: Option<f64> = None;
    for _ in 0..cfg.config().outer_max_iters {
        let u = wmmse::update_receivers(channels, &v, noise)?;
        let w = wmmse::update_weights(&u, channels, &v)?;
        v = spc_precoders(channels, cfg, &u, &w, total_power)?;

        let mut state = SolverState::new(v.clone(), cfg);
        state.receivers = u;
        state.weights = w;
        objective_trace.push(wmmse::wmmse_objective(&state, channels, cfg)?);
        let (wsr, _) = wmmse::weighted_sum_rate(channels, &v, cfg)?;
        wsr_trace_bits.push(nats_to_bits(wsr));
        if let Some(p) = prev_wsr {
            if (wsr - p).abs() <= cfg.config().outer_tol * p.abs().max(1.0) {
                break;
            }
        }
        prev_wsr = Some(wsr);
    }
    Ok(SpcSolution {
        precoders: v,
        objective_trace,
        wsr_trace_bits,
    })
}

/// `V_k = α_k (A + μI)⁻¹ H_k^H U_k W_k` with `A = Σ_j α_j H_j^H U_j W_j U_j^H H_j`
/// and the smallest `μ ≥ 0` meeting the total budget.
fn spc_precoders(
    channels: &ChannelSet,
    cfg: &ValidatedConfig,
    receivers: &[CMat],
    weights: &[CMat],
    total_power: f64,
) -> Result<PrecoderSet> {
    let nt = cfg.nt();
    let mut a = CMat::zeros(nt, nt);
    let mut rhs = Vec::with_capacity(cfg.users());
    for k in 0..cfg.users() {
        let alpha = cfg.weights()[k];
        let g = channels.get(k).adjoint() * &receivers[k];
        a += &g * &weights[k] * g.adjoint() * c(alpha, 0.0);
        rhs.push(&g * &weights[k] * c(alpha, 0.0));
    }
    let (eigvals, q) = linalg::hermitian_eigen(&linalg::hermitized(a));
    let eigvals: Vec<f64> = eigvals.iter().map(|&l| l.max(0.0)).collect();
    let rotated: Vec<CMat> = rhs.iter().map(|b| q.adjoint() * b).collect();
    // Power of row i of Q^H B across all users.
    let numer: Vec<f64> = (0..nt)
        .map(|i| rotated.iter().map(|b| b.row(i).norm_squared()).sum())
        .collect();
    let top = eigvals.iter().cloned().fold(0.0, f64::max);
    let power = |mu: f64| -> f64 {
        eigvals
            .iter()
            .zip(&numer)
            .map(|(&l, &n)| if n == 0.0 { 0.0 } else { n / (l + mu).powi(2) })
            .sum()
    };
    let singular = eigvals.iter().zip(&numer).any(|(&l, &n)| n > 0.0 && l <= RANK_TOL * top);
    let mu = if !singular && power(0.0) <= total_power {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = top.max(f64::MIN_POSITIVE);
        while power(hi) > total_power {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..MU_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if power(mid) > total_power {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let inv_diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        nt,
        eigvals.iter().map(|&l| c(if l + mu > 0.0 { 1.0 / (l + mu) } else { 0.0 }, 0.0)),
    ));
    let precoders = rotated.iter().map(|b| &q * (&inv_diag * b)).collect();
    PrecoderSet::new(precoders)
}

/// Sum-power WMMSE at `Σ_m P_m`, shrunk by a common scalar only when some
/// antenna exceeds its budget.
pub fn wmmse_spc_normalized(channels: &ChannelSet, cfg: &ValidatedConfig) -> Result<PrecoderSet> {
    let total: f64 = cfg.budgets().iter().sum();
    let mut v = wmmse_spc(channels, cfg, total)?;
    if v.max_antenna_ratio(cfg.budgets()) > 1.0 {
        v.scale_to_budgets(cfg.budgets());
    }
    Ok(v)
}

/// The proposed solver with every QoS target at zero.
pub fn papc_only(channels: &ChannelSet, cfg: &ValidatedConfig, options: &SolveOptions) -> Result<Solution> {
    solver::solve(channels, &cfg.without_qos(), options)
}
