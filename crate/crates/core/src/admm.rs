//! Inner ADMM solver for the precoder block with fixed receivers and weights.
//!
//! The consensus constraints `X_{k,j} = U_k^H H_k V_j` split the problem into
//! a precoder block, where only the per-antenna power budgets remain and each
//! antenna row has a closed form, and an auxiliary block, where only the QoS
//! constraints remain and the problem separates over users with one scalar
//! multiplier each.
//!
//! Duals are kept in scaled form: the penalty is
//! `(ρ/2)‖U_k^H H_k V_j − X_{k,j} + λ_{k,j}‖²` and the update is
//! `λ ← λ + (U_k^H H_k V_j − X_{k,j})`.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{ChannelSet, PairGrid, PrecoderSet, SolverState, ValidatedConfig};
use crate::wmmse;

/// Eigenvalues of `W_k` above `-EIGEN_CLAMP` (relative) are clamped to zero.
const EIGEN_CLAMP: f64 = 1e-10;
/// Gauss–Seidel sweep limits of the precoder subproblem.
pub const MAX_SWEEPS: usize = 50;
pub const SWEEP_TOL: f64 = 1e-8;
/// Bracket doublings allowed when searching for the QoS multiplier.
pub const MAX_DOUBLINGS: usize = 200;

/// Data fixed for one outer iteration.
#[derive(Debug, Clone)]
pub struct AdmmWorkspace {
    pub rho: f64,
    pub receivers: Vec<CMat>,
    pub weights: Vec<CMat>,
    /// Right-hand side `e_k` of each user's QoS constraint.
    pub slacks: Vec<f64>,
    /// `A_k = U_k^H H_k`, `d × N_t`. Column `m` is `U_k^H h_{k,m}`.
    pub effective: Vec<CMat>,
    /// `q_m = ρ Σ_j h_{j,m}^H U_j U_j^H h_{j,m}`.
    pub antenna_gains: Vec<f64>,
    /// Eigenvalues of `W_k`, ascending, clamped at zero.
    pub weight_eigvals: Vec<Vec<f64>>,
    /// Unitary eigenvector matrix of `W_k`.
    pub weight_eigvecs: Vec<CMat>,
}

impl AdmmWorkspace {
    pub fn new(
        channels: &ChannelSet,
        receivers: &[CMat],
        weights: &[CMat],
        cfg: &ValidatedConfig,
    ) -> Result<Self> {
        let rho = cfg.rho();
        let users = cfg.users();
        let effective: Vec<CMat> = (0..users)
            .map(|k| receivers[k].adjoint() * channels.get(k))
            .collect();
        let antenna_gains = (0..cfg.nt())
            .map(|m| {
                rho * effective
                    .iter()
                    .map(|a| a.column(m).iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum::<f64>()
            })
            .collect();
        let mut weight_eigvals = Vec::with_capacity(users);
        let mut weight_eigvecs = Vec::with_capacity(users);
        let mut slacks = Vec::with_capacity(users);
        for k in 0..users {
            let (mut vals, vecs) = linalg::hermitian_eigen(&weights[k]);
            let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            for v in vals.iter_mut() {
                if *v < 0.0 {
                    if *v < -EIGEN_CLAMP * scale {
                        return Err(Error::NotPositiveDefinite {
                            what: format!("weight matrix of user {k}"),
                        });
                    }
                    *v = 0.0;
                }
            }
            weight_eigvals.push(vals);
            weight_eigvecs.push(vecs);
            slacks.push(wmmse::surrogate_slack(
                &receivers[k],
                &weights[k],
                cfg.qos_targets_nats()[k],
                cfg.noise_power(),
                k,
            )?);
        }
        Ok(AdmmWorkspace {
            rho,
            receivers: receivers.to_vec(),
            weights: weights.iter().cloned().map(linalg::hermitized).collect(),
            slacks,
            effective,
            antenna_gains,
            weight_eigvals,
            weight_eigvecs,
        })
    }

    pub fn from_state(state: &SolverState, channels: &ChannelSet, cfg: &ValidatedConfig) -> Result<Self> {
        Self::new(channels, &state.receivers, &state.weights, cfg)
    }

    /// `U_k^H H_k V_j`.
    pub fn consensus(&self, precoders: &PrecoderSet, k: usize, j: usize) -> CMat {
        &self.effective[k] * precoders.get(j)
    }

    pub fn consensus_grid(&self, precoders: &PrecoderSet) -> PairGrid {
        PairGrid::from_fn(precoders.users(), |k, j| self.consensus(precoders, k, j))
    }
}

/// Augmented Lagrangian of the consensus problem (scaled duals).
pub fn augmented_lagrangian(state: &SolverState, ws: &AdmmWorkspace, cfg: &ValidatedConfig) -> f64 {
    let users = cfg.users();
    let alpha = cfg.weights();
    let mut total = 0.0;
    for k in 0..users {
        let w = &ws.weights[k];
        let xkk = state.aux.get(k, k);
        total -= 2.0 * alpha[k] * linalg::trace_product_re(w, xkk);
        for j in 0..users {
            let x = state.aux.get(k, j);
            total += alpha[k] * linalg::trace_product_re(w, &(x * x.adjoint()));
            let r = ws.consensus(&state.precoders, k, j) - x + state.duals.get(k, j);
            total += 0.5 * ws.rho * linalg::frob_sq(&r);
        }
    }
    total
}

/// Objective of the precoder subproblem:
/// `(ρ/2) Σ_{k,j} ‖U_k^H H_k V_j − X_{k,j} + λ_{k,j}‖²`.
pub fn precoder_objective(
    precoders: &PrecoderSet,
    aux: &PairGrid,
    duals: &PairGrid,
    ws: &AdmmWorkspace,
) -> f64 {
    let users = precoders.users();
    let mut total = 0.0;
    for k in 0..users {
        for j in 0..users {
            total += linalg::frob_sq(&(ws.consensus(precoders, k, j) - aux.get(k, j) + duals.get(k, j)));
        }
    }
    0.5 * ws.rho * total
}

/// Multiplier `μ_m ≥ 0` of antenna `m`'s power budget, from
/// `Tr(D) / (q + 2μ)² = P_m`, clamped at zero when the budget is inactive.
pub fn antenna_multiplier(d_trace: f64, q: f64, budget: f64) -> Result<f64> {
    if !(budget > 0.0) {
        return Err(Error::NonPositiveBudget(budget));
    }
    Ok((((d_trace.max(0.0) / budget).sqrt() - q) / 2.0).max(0.0))
}

#[derive(Debug, Clone)]
pub struct PrecoderUpdate {
    pub precoders: PrecoderSet,
    /// Final `μ_m` of every antenna.
    pub multipliers: Vec<f64>,
    pub sweeps: usize,
    /// Subproblem objective after each sweep.
    pub objective_trace: Vec<f64>,
}

/// Gauss–Seidel sweeps over antennas; each antenna's rows of all `K`
/// precoders are updated jointly in closed form.
pub fn solve_v_subproblem(
    state: &SolverState,
    ws: &AdmmWorkspace,
    cfg: &ValidatedConfig,
) -> Result<PrecoderUpdate> {
    let users = cfg.users();
    let nt = cfg.nt();
    let d = cfg.streams();
    let budgets = cfg.budgets();
    if state.precoders.users() != users || state.precoders.nt() != nt || state.precoders.streams() != d {
        return Err(Error::Dimension("precoders do not match the configuration".into()));
    }
    if let Some(&b) = budgets.iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::NonPositiveBudget(b));
    }
    let rho = ws.rho;
    let mut v = state.precoders.clone();
    // resid(j, k) = A_j V_k − X_{j,k} + λ_{j,k}
    let mut resid = PairGrid::from_fn(users, |j, k| {
        ws.consensus(&v, j, k) - state.aux.get(j, k) + state.duals.get(j, k)
    });
    let mut multipliers = vec![0.0; nt];
    let mut objective_trace = Vec::new();
    let mut sweeps = 0;
    let mut rows = vec![CMat::zeros(1, d); users];
    let mut new_rows = vec![CMat::zeros(1, d); users];
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut change = 0.0;
        for m in 0..nt {
            let q = ws.antenna_gains[m];
            let q_plain = q / rho;
            let mut d_trace = 0.0;
            for k in 0..users {
                rows[k] = v.get(k).rows(m, 1).into_owned();
                // b_k = q' r_km − Σ_j a_jm^H resid(j, k)
                let mut b = &rows[k] * c(q_plain, 0.0);
                for j in 0..users {
                    let a = ws.effective[j].column(m);
                    b -= a.adjoint() * resid.get(j, k);
                }
                d_trace += rho * rho * linalg::frob_sq(&b);
                new_rows[k] = b * c(rho, 0.0);
            }
            let mu = antenna_multiplier(d_trace, q, budgets[m])?;
            let denom = q + 2.0 * mu;
            multipliers[m] = mu;
            for k in 0..users {
                if denom > 0.0 {
                    new_rows[k] /= c(denom, 0.0);
                } else {
                    // Antenna invisible to every receiver: numerator is zero too.
                    new_rows[k].fill(linalg::ZERO);
                }
                let delta = &new_rows[k] - &rows[k];
                change += linalg::frob_sq(&delta);
                for j in 0..users {
                    let a = ws.effective[j].column(m);
                    *resid.get_mut(j, k) += a * &delta;
                }
                v.get_mut(k).set_row(m, &new_rows[k].row(0));
            }
        }
        objective_trace.push(0.5 * rho * resid.frob_sq());
        let norm = v.total_power();
        if change <= SWEEP_TOL * SWEEP_TOL * norm.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(PrecoderUpdate {
        precoders: v,
        multipliers,
        sweeps,
        objective_trace,
    })
}

/// Scalar data of user `k`'s QoS multiplier equation, expressed in the
/// eigenbasis of `W_k`:
///
/// `LHS(τ) = Σ_m Λ_m (φ_m + g_m) / (2αΛ_m + ρ + 2τΛ_m)² − Σ_m Λ_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QosMultiplierProblem {
    pub eigvals: Vec<f64>,
    /// Diagonal of `D^H Φ D`, interference part.
    pub phi_diag: Vec<f64>,
    /// Diagonal of `G`, desired-signal part.
    pub g_diag: Vec<f64>,
    pub alpha: f64,
    pub rho: f64,
}

impl QosMultiplierProblem {
    pub fn for_user(state: &SolverState, ws: &AdmmWorkspace, cfg: &ValidatedConfig, k: usize) -> Self {
        let d = cfg.streams();
        let rho = ws.rho;
        let vecs = &ws.weight_eigvecs[k];
        let mut phi = CMat::zeros(d, d);
        let mut g = CMat::zeros(d, d);
        for j in 0..cfg.users() {
            let b = ws.consensus(&state.precoders, k, j) + state.duals.get(k, j);
            if j == k {
                let shifted = b - linalg::identity(d);
                g += &shifted * shifted.adjoint();
            } else {
                phi += &b * b.adjoint();
            }
        }
        let rho2 = c(rho * rho, 0.0);
        let phi_rot = vecs.adjoint() * phi * vecs * rho2;
        let g_rot = vecs.adjoint() * g * vecs * rho2;
        QosMultiplierProblem {
            eigvals: ws.weight_eigvals[k].clone(),
            phi_diag: (0..d).map(|i| phi_rot[(i, i)].re).collect(),
            g_diag: (0..d).map(|i| g_rot[(i, i)].re).collect(),
            alpha: cfg.weights()[k],
            rho,
        }
    }

    pub fn lhs(&self, tau: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.eigvals.len() {
            let lam = self.eigvals[i];
            if lam == 0.0 {
                continue;
            }
            let den = 2.0 * self.alpha * lam + self.rho + 2.0 * tau * lam;
            total += lam * (self.phi_diag[i] + self.g_diag[i]) / (den * den) - lam;
        }
        total
    }

    /// `lim_{τ→∞} LHS(τ) = −Tr(W_k)`.
    pub fn floor(&self) -> f64 {
        -self.eigvals.iter().sum::<f64>()
    }
}

/// Smallest `τ > 0` with `LHS(τ) ≤ rhs`, to within `tol` relative residual.
/// Assumes `LHS(0) > rhs > floor`.
pub fn x_multiplier_bisection(problem: &QosMultiplierProblem, rhs: f64, tol: f64) -> Result<f64> {
    let scale = rhs.abs().max(problem.floor().abs()).max(1.0);
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut lhs_lo = problem.lhs(lo);
    let mut lhs_hi = problem.lhs(hi);
    let mut doublings = 0;
    while lhs_hi > rhs {
        if doublings >= MAX_DOUBLINGS {
            return Err(Error::Numerical(format!(
                "QoS multiplier bracket not found after {MAX_DOUBLINGS} doublings (rhs {rhs}, floor {})",
                problem.floor()
            )));
        }
        lo = hi;
        lhs_lo = lhs_hi;
        hi *= 2.0;
        lhs_hi = problem.lhs(hi);
        doublings += 1;
    }
    for _ in 0..2000 {
        if lhs_lo - lhs_hi <= tol * scale || hi - lo <= f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let val = problem.lhs(mid);
        if val > rhs {
            lo = mid;
            lhs_lo = val;
        } else {
            hi = mid;
            lhs_hi = val;
        }
    }
    Ok(hi)
}

/// Closed-form auxiliaries of user `k` for a given multiplier `τ`.
pub fn aux_row(state: &SolverState, ws: &AdmmWorkspace, cfg: &ValidatedConfig, k: usize, tau: f64) -> Vec<CMat> {
    let d = cfg.streams();
    let rho = ws.rho;
    let alpha = cfg.weights()[k];
    let vecs = &ws.weight_eigvecs[k];
    // (2αW + ρI + 2τW)⁻¹ = D diag(1 / (2(α+τ)Λ + ρ)) D^H
    let inv_diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        ws.weight_eigvals[k]
            .iter()
            .map(|&lam| c(1.0 / (2.0 * (alpha + tau) * lam + rho), 0.0)),
    ));
    let inv = vecs * inv_diag * vecs.adjoint();
    let w = &ws.weights[k];
    (0..cfg.users())
        .map(|j| {
            let b = (ws.consensus(&state.precoders, k, j) + state.duals.get(k, j)) * c(rho, 0.0);
            if j == k {
                &inv * (w * c(2.0 * (alpha + tau), 0.0) + b)
            } else {
                &inv * b
            }
        })
        .collect()
}

/// Left side of user `k`'s QoS constraint evaluated directly on `X_{k,·}`:
/// `Σ_j Tr(W Y_j Y_j^H) − Tr(W)` with `Y_k = X_{k,k} − I`, `Y_j = X_{k,j}`.
pub fn qos_constraint_value(weight: &CMat, row: &[CMat], k: usize) -> f64 {
    let d = weight.nrows();
    let mut total = -linalg::trace_re(weight);
    for (j, x) in row.iter().enumerate() {
        let y = if j == k { x - linalg::identity(d) } else { x.clone() };
        total += linalg::trace_product_re(weight, &(&y * y.adjoint()));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QosOutcome {
    /// Constraint slack at `τ = 0`.
    Inactive,
    /// Constraint tight at the returned multiplier.
    Active { tau: f64 },
}

impl QosOutcome {
    pub fn tau(self) -> f64 {
        match self {
            QosOutcome::Inactive => 0.0,
            QosOutcome::Active { tau } => tau,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuxUpdate {
    pub aux: PairGrid,
    pub outcomes: Vec<QosOutcome>,
}

/// Users whose QoS constraint cannot be met by any auxiliary matrices: the
/// constraint's infimum `−Tr(W_k)` is not strictly below `e_k`.
pub fn unreachable_users(ws: &AdmmWorkspace, cfg: &ValidatedConfig) -> Vec<usize> {
    (0..cfg.users())
        .filter(|&k| {
            let floor = -linalg::trace_re(&ws.weights[k]);
            let margin = cfg.config().bisection_tol * floor.abs().max(1.0);
            ws.slacks[k] <= floor + margin
        })
        .collect()
}

/// Largest rate gain, in nats over the current rate, user `k`'s QoS
/// constraint can ask for before the auxiliary subproblem becomes
/// unreachable: `d − σ² Tr(W_k U_k^H U_k)`, valid at MMSE receivers and
/// weights where `log det W_k` is the current rate.
pub fn reachable_gain(ws: &AdmmWorkspace, cfg: &ValidatedConfig, k: usize) -> f64 {
    let u = &ws.receivers[k];
    cfg.streams() as f64 - cfg.noise_power() * linalg::trace_product_re(&ws.weights[k], &(u.adjoint() * u))
}

/// Replaces the slack of every unreachable user with the one that asks for
/// `fraction` of [`reachable_gain`] above the current rate. Returns the
/// relaxed users.
pub fn relax_unreachable(ws: &mut AdmmWorkspace, cfg: &ValidatedConfig, fraction: f64) -> Vec<usize> {
    let users = unreachable_users(ws, cfg);
    for &k in &users {
        let floor = -linalg::trace_re(&ws.weights[k]);
        let gain = reachable_gain(ws, cfg, k).max(0.0);
        ws.slacks[k] = floor + (1.0 - fraction) * gain;
    }
    users
}

/// Per-user auxiliary update with the QoS multiplier found by bisection when
/// the unconstrained candidates violate the constraint.
pub fn solve_x_subproblem(state: &SolverState, ws: &AdmmWorkspace, cfg: &ValidatedConfig) -> Result<AuxUpdate> {
    let infeasible = unreachable_users(ws, cfg);
    if !infeasible.is_empty() {
        return Err(Error::InfeasibleQos { users: infeasible });
    }
    let users = cfg.users();
    let mut aux = PairGrid::zeros(users, cfg.streams());
    let mut outcomes = Vec::with_capacity(users);
    for k in 0..users {
        let free = aux_row(state, ws, cfg, k, 0.0);
        let rhs = ws.slacks[k];
        let (row, outcome) = if qos_constraint_value(&ws.weights[k], &free, k) <= rhs {
            (free, QosOutcome::Inactive)
        } else {
            let problem = QosMultiplierProblem::for_user(state, ws, cfg, k);
            let tau = x_multiplier_bisection(&problem, rhs, cfg.config().bisection_tol)?;
            (aux_row(state, ws, cfg, k, tau), QosOutcome::Active { tau })
        };
        for (j, x) in row.into_iter().enumerate() {
            aux.set(k, j, x);
        }
        outcomes.push(outcome);
    }
    Ok(AuxUpdate { aux, outcomes })
}

/// `λ_{k,j} ← λ_{k,j} + (U_k^H H_k V_j − X_{k,j})`. Returns the updated duals
/// and the primal residual norm.
pub fn update_duals(state: &SolverState, ws: &AdmmWorkspace) -> (PairGrid, f64) {
    let users = state.aux.users();
    let mut duals = state.duals.clone();
    let mut resid_sq = 0.0;
    for k in 0..users {
        for j in 0..users {
            let r = ws.consensus(&state.precoders, k, j) - state.aux.get(k, j);
            resid_sq += linalg::frob_sq(&r);
            *duals.get_mut(k, j) += r;
        }
    }
    (duals, resid_sq.sqrt())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmmTrace {
    pub primal_residual: Vec<f64>,
    pub dual_residual: Vec<f64>,
    pub augmented_lagrangian: Vec<f64>,
}

impl AdmmTrace {
    pub fn len(&self) -> usize {
        self.primal_residual.len()
    }
    pub fn is_empty(&self) -> bool {
        self.primal_residual.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdmmStatus {
    Converged,
    MaxIters,
    InfeasibleQos { users: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub status: AdmmStatus,
    pub iterations: usize,
    pub trace: AdmmTrace,
    /// QoS multiplier outcomes of the last auxiliary update.
    pub qos: Vec<QosOutcome>,
    pub antenna_multipliers: Vec<f64>,
}

/// Stopping threshold `inner_tol · K · d` for both residuals.
pub fn residual_threshold(cfg: &ValidatedConfig) -> f64 {
    cfg.config().inner_tol * (cfg.users() * cfg.streams()) as f64
}

/// Iterates precoder, auxiliary and dual updates on `state` until both
/// residuals fall below [`residual_threshold`] or `inner_max_iters` is hit.
pub fn run_admm(state: &mut SolverState, ws: &AdmmWorkspace, cfg: &ValidatedConfig) -> Result<AdmmOutcome> {
    let threshold = residual_threshold(cfg);
    let mut trace = AdmmTrace::default();
    let mut qos = vec![QosOutcome::Inactive; cfg.users()];
    let mut antenna_multipliers = vec![0.0; cfg.nt()];
    let mut status = AdmmStatus::MaxIters;
    let mut iterations = 0;
    while iterations < cfg.config().inner_max_iters {
        iterations += 1;
        let v = solve_v_subproblem(state, ws, cfg)?;
        state.precoders = v.precoders;
        antenna_multipliers = v.multipliers;
        let x = match solve_x_subproblem(state, ws, cfg) {
            Ok(x) => x,
            Err(Error::InfeasibleQos { users }) => {
                status = AdmmStatus::InfeasibleQos { users };
                break;
            }
            Err(e) => return Err(e),
        };
        let mut change_sq = 0.0;
        for (new, old) in x.aux.iter().zip(state.aux.iter()) {
            change_sq += linalg::frob_sq(&(new - old));
        }
        let dual_res = ws.rho * change_sq.sqrt();
        state.aux = x.aux;
        qos = x.outcomes;
        let (duals, primal_res) = update_duals(state, ws);
        state.duals = duals;
        trace.primal_residual.push(primal_res);
        trace.dual_residual.push(dual_res);
        trace.augmented_lagrangian.push(augmented_lagrangian(state, ws, cfg));
        if primal_res < threshold && dual_res < threshold {
            status = AdmmStatus::Converged;
            break;
        }
    }
    Ok(AdmmOutcome {
        status,
        iterations,
        trace,
        qos,
        antenna_multipliers,
    })
}
