//! Achievable rates, MSE matrices and the closed-form receiver and weight
//! updates of the WMMSE reformulation. All logarithms are natural.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{ChannelSet, PrecoderSet, SolverState, ValidatedConfig};

/// Condition number of `I − U^H H V` above which the weight update refuses.
pub const WEIGHT_CONDITION_LIMIT: f64 = 1e12;

/// `Σ_{j ∈ users} H V_j V_j^H H^H`.
fn signal_covariance<'a>(h: &CMat, precoders: impl Iterator<Item = &'a CMat>) -> CMat {
    let nr = h.nrows();
    let mut acc = CMat::zeros(nr, nr);
    for v in precoders {
        let hv = h * v;
        acc += &hv * hv.adjoint();
    }
    acc
}

fn add_noise(mut m: CMat, noise_power: f64) -> CMat {
    for i in 0..m.nrows() {
        m[(i, i)] += c(noise_power, 0.0);
    }
    m
}

/// `R_k = log det(I + H_k V_k V_k^H H_k^H C_k⁻¹)`, nats.
pub fn user_rate(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    k: usize,
    noise_power: f64,
) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::NonPositiveNoise(noise_power));
    }
    if k >= channels.users() || channels.users() != precoders.users() {
        return Err(Error::Dimension(format!(
            "user {k} with {} channels and {} precoders",
            channels.users(),
            precoders.users()
        )));
    }
    let h = channels.get(k);
    let interference = add_noise(
        signal_covariance(h, precoders.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v)),
        noise_power,
    );
    let hv = h * precoders.get(k);
    let total = &interference + &hv * hv.adjoint();
    // log det(C + S) − log det C, both Hermitian positive definite.
    let rate = linalg::log_det_hpd(&total, "received covariance")?
        - linalg::log_det_hpd(&interference, "interference-plus-noise covariance")?;
    Ok(rate.max(0.0))
}

/// `Σ_k α_k R_k` and the per-user rates, nats.
pub fn weighted_sum_rate(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    cfg: &ValidatedConfig,
) -> Result<(f64, Vec<f64>)> {
    let rates = (0..channels.users())
        .map(|k| user_rate(channels, precoders, k, cfg.noise_power()))
        .collect::<Result<Vec<_>>>()?;
    let wsr = rates.iter().zip(cfg.weights()).map(|(r, a)| r * a).sum();
    Ok((wsr, rates))
}

/// MSE matrix `E_k` for receiver `U_k`, Hermitian-symmetrized.
pub fn mse_matrix(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    receivers: &[CMat],
    k: usize,
    noise_power: f64,
) -> CMat {
    let h = channels.get(k);
    let u = &receivers[k];
    let d = precoders.streams();
    let uh_h = u.adjoint() * h;
    let err = linalg::identity(d) - &uh_h * precoders.get(k);
    let mut e = &err * err.adjoint() + u.adjoint() * u * c(noise_power, 0.0);
    for (j, v) in precoders.iter().enumerate() {
        if j != k {
            let x = &uh_h * v;
            e += &x * x.adjoint();
        }
    }
    linalg::hermitized(e)
}

/// MMSE receivers `U_k = (Σ_j H_k V_j V_j^H H_k^H + σ² I)⁻¹ H_k V_k`.
pub fn update_receivers(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    noise_power: f64,
) -> Result<Vec<CMat>> {
    if !(noise_power > 0.0) {
        return Err(Error::NonPositiveNoise(noise_power));
    }
    (0..channels.users())
        .map(|k| {
            let h = channels.get(k);
            let j = add_noise(signal_covariance(h, precoders.iter()), noise_power);
            linalg::hpd_solve(&j, &(h * precoders.get(k)), "receive covariance")
        })
        .collect()
}

/// `W_k = (I − U_k^H H_k V_k)⁻¹`, Hermitian-symmetrized.
pub fn update_weights(
    receivers: &[CMat],
    channels: &ChannelSet,
    precoders: &PrecoderSet,
) -> Result<Vec<CMat>> {
    let d = precoders.streams();
    (0..channels.users())
        .map(|k| {
            let m = linalg::identity(d)
                - receivers[k].adjoint() * channels.get(k) * precoders.get(k);
            let condition = linalg::condition_number(&m);
            if !(condition < WEIGHT_CONDITION_LIMIT) {
                return Err(Error::DegenerateGeometry { user: k, condition });
            }
            let inv = m
                .try_inverse()
                .ok_or(Error::DegenerateGeometry { user: k, condition })?;
            Ok(linalg::hermitized(inv))
        })
        .collect()
}

/// `Σ_k α_k (Tr(W_k E_k) − log det W_k − d)`, with `E_k` from the state.
pub fn wmmse_objective(state: &SolverState, channels: &ChannelSet, cfg: &ValidatedConfig) -> Result<f64> {
    let d = cfg.streams() as f64;
    let mut total = 0.0;
    for k in 0..cfg.users() {
        let e = mse_matrix(channels, &state.precoders, &state.receivers, k, cfg.noise_power());
        let w = &state.weights[k];
        let log_det_w = linalg::log_det_hpd(w, &format!("weight matrix of user {k}"))?;
        total += cfg.weights()[k] * (linalg::trace_product_re(w, &e) - log_det_w - d);
    }
    Ok(total)
}

/// `e_k = log det W + d − r − Tr(W + σ² W U^H U)`.
pub(crate) fn surrogate_slack(
    receiver: &CMat,
    weight: &CMat,
    target_nats: f64,
    noise_power: f64,
    user: usize,
) -> Result<f64> {
    let d = weight.nrows() as f64;
    let log_det_w = linalg::log_det_hpd(weight, &format!("weight matrix of user {user}"))?;
    let gram = receiver.adjoint() * receiver;
    Ok(log_det_w + d
        - target_nats
        - linalg::trace_re(weight)
        - noise_power * linalg::trace_product_re(weight, &gram))
}

/// Right-hand side `e_k` of user `k`'s QoS constraint in the auxiliary-variable
/// subproblem, with the target in nats.
pub fn qos_surrogate_slack(
    state: &SolverState,
    _channels: &ChannelSet,
    cfg: &ValidatedConfig,
    k: usize,
) -> Result<f64> {
    surrogate_slack(
        &state.receivers[k],
        &state.weights[k],
        cfg.qos_targets_nats()[k],
        cfg.noise_power(),
        k,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::model::{PairGrid, SystemConfig};
    use crate::testutil::{random_instance, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn scalar(h: f64) -> ChannelSet {
        ChannelSet::new(vec![CMat::from_element(1, 1, c(h, 0.0))]).unwrap()
    }
    fn scalar_v(v: f64) -> PrecoderSet {
        PrecoderSet::new(vec![CMat::from_element(1, 1, c(v, 0.0))]).unwrap()
    }

    #[test]
    fn scalar_rate_is_one_bit() {
        let r = user_rate(&scalar(1.0), &scalar_v(1.0), 0, 1.0).unwrap();
        assert!((r - LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_precoders_zero_rate() {
        let (cfg, ch, _) = random_instance(4, 2, 2, 2, 1);
        let zero = PrecoderSet::zeros(&cfg);
        for k in 0..2 {
            assert_eq!(user_rate(&ch, &zero, k, cfg.noise_power()).unwrap(), 0.0);
        }
    }

    #[test]
    fn non_positive_noise_reported() {
        assert!(matches!(
            user_rate(&scalar(1.0), &scalar_v(1.0), 0, 0.0),
            Err(Error::NonPositiveNoise(_))
        ));
    }

    #[test]
    fn weighted_sum_composes() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 3);
        let (a, b) = (
            user_rate(&ch, &v, 0, cfg.noise_power()).unwrap(),
            user_rate(&ch, &v, 1, cfg.noise_power()).unwrap(),
        );
        let (wsr, rates) = weighted_sum_rate(&ch, &v, &cfg).unwrap();
        assert!((wsr - (a + b)).abs() < 1e-12);
        assert_eq!(rates, vec![a, b]);

        let mut raw = cfg.config().clone();
        raw.user_weights = vec![2.0, 1e-300];
        let cfg2 = raw.validate().unwrap();
        let (wsr2, _) = weighted_sum_rate(&ch, &v, &cfg2).unwrap();
        assert!((wsr2 - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn scalar_receiver_weight_and_mse() {
        let (h, v) = (scalar(1.0), scalar_v(1.0));
        let u = update_receivers(&h, &v, 1.0).unwrap();
        assert!((u[0][(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        let e = mse_matrix(&h, &v, &u, 0, 1.0);
        // (1 − 0.5)² + 1·0.25
        assert!((e[(0, 0)].re - 0.5).abs() < 1e-15);
        let w = update_weights(&u, &h, &v).unwrap();
        assert!((w[0][(0, 0)].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_receiver_gives_identity_mse() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 5);
        let u = vec![CMat::zeros(2, 2); 2];
        let e = mse_matrix(&ch, &v, &u, 1, cfg.noise_power());
        assert!(linalg::frob_sq(&(e - linalg::identity(2))) < 1e-30);
        let w = update_weights(&u, &ch, &v).unwrap();
        assert!(linalg::frob_sq(&(&w[0] - linalg::identity(2))) < 1e-30);
    }

    #[test]
    fn zero_precoders_zero_receivers() {
        let (cfg, ch, _) = random_instance(4, 2, 2, 2, 6);
        let u = update_receivers(&ch, &PrecoderSet::zeros(&cfg), cfg.noise_power()).unwrap();
        assert!(u.iter().all(|m| linalg::frob_sq(m) == 0.0));
    }

    #[test]
    fn mmse_receiver_collapses_mse() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 7);
        let u = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        for k in 0..2 {
            let e = mse_matrix(&ch, &v, &u, k, cfg.noise_power());
            let short = linalg::identity(2) - u[k].adjoint() * ch.get(k) * v.get(k);
            assert!(linalg::frob_sq(&(e - short)).sqrt() < 1e-10);
        }
    }

    #[test]
    fn rate_equals_log_det_inverse_mse() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 7);
        let u = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        for k in 0..2 {
            let e = mse_matrix(&ch, &v, &u, k, cfg.noise_power());
            let via_mse = -linalg::log_det_hpd(&e, "E").unwrap();
            let direct = user_rate(&ch, &v, k, cfg.noise_power()).unwrap();
            assert!((via_mse - direct).abs() < 1e-9, "{via_mse} vs {direct}");
        }
    }

    #[test]
    fn weight_inverts_mse() {
        let (cfg, ch, v) = random_instance(6, 2, 3, 2, 8);
        let u = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        let w = update_weights(&u, &ch, &v).unwrap();
        for k in 0..3 {
            let e = mse_matrix(&ch, &v, &u, k, cfg.noise_power());
            assert!(linalg::frob_sq(&(&w[k] * e - linalg::identity(2))).sqrt() < 1e-8);
        }
    }

    #[test]
    fn mmse_receiver_is_first_order_optimal() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 11);
        let u = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // Any PSD weight.
        let g = random_matrix(&mut rng, 2, 2);
        let w = &g * g.adjoint() + linalg::identity(2);
        let base = linalg::trace_product_re(&w, &mse_matrix(&ch, &v, &u, 0, cfg.noise_power()));
        let scale = linalg::frob_sq(&u[0]).sqrt();
        for _ in 0..100 {
            let mut delta = random_matrix(&mut rng, 2, 2);
            let n = linalg::frob_sq(&delta).sqrt();
            delta *= c(1e-3 * scale / n, 0.0);
            let mut perturbed = u.clone();
            perturbed[0] += &delta;
            let e = mse_matrix(&ch, &v, &perturbed, 0, cfg.noise_power());
            assert!(linalg::trace_product_re(&w, &e) >= base - 1e-12 * base.abs());
        }
    }

    #[test]
    fn singular_weight_geometry_named() {
        // U^H H V = 1 exactly → I − U^H H V singular.
        let err = update_weights(
            &[CMat::from_element(1, 1, ONE)],
            &scalar(1.0),
            &scalar_v(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry { user: 0, .. }));
    }

    fn trivial_state(d: usize, users: usize, nr: usize, nt: usize) -> (ValidatedConfig, ChannelSet, SolverState) {
        let cfg = SystemConfig::uniform(nt, nr, users, d, 10.0).validate().unwrap();
        let ch = ChannelSet::new(vec![CMat::from_element(nr, nt, c(1e-5, 0.0)); users]).unwrap();
        let state = SolverState::new(PrecoderSet::zeros(&cfg), &cfg);
        (cfg, ch, state)
    }

    #[test]
    fn objective_zero_at_trivial_state() {
        let (cfg, ch, state) = trivial_state(2, 2, 2, 4);
        assert!(wmmse_objective(&state, &ch, &cfg).unwrap().abs() < 1e-15);
    }

    #[test]
    fn objective_with_identity_weights() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 12);
        let mut state = SolverState::new(v.clone(), &cfg);
        state.receivers = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        let want: f64 = (0..2)
            .map(|k| linalg::trace_re(&mse_matrix(&ch, &v, &state.receivers, k, cfg.noise_power())) - 2.0)
            .sum();
        assert!((wmmse_objective(&state, &ch, &cfg).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn objective_at_block_optimum_is_minus_wsr() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 13);
        let mut state = SolverState::new(v.clone(), &cfg);
        state.receivers = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        state.weights = update_weights(&state.receivers, &ch, &v).unwrap();
        let (wsr, _) = weighted_sum_rate(&ch, &v, &cfg).unwrap();
        assert!((wmmse_objective(&state, &ch, &cfg).unwrap() + wsr).abs() < 1e-8);
    }

    #[test]
    fn objective_rejects_non_psd_weight() {
        let (cfg, ch, mut state) = trivial_state(2, 2, 2, 4);
        state.weights[1] = -linalg::identity(2);
        assert!(wmmse_objective(&state, &ch, &cfg).is_err());
    }

    #[test]
    fn slack_trivial_values() {
        let (cfg, ch, state) = trivial_state(2, 1, 2, 4);
        assert!(qos_surrogate_slack(&state, &ch, &cfg, 0).unwrap().abs() < 1e-15);
        let mut raw = cfg.config().clone();
        raw.qos_targets_bits = vec![1.0 / LN_2];
        let cfg1 = raw.validate().unwrap();
        assert!((qos_surrogate_slack(&state, &ch, &cfg1, 0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn slack_matches_termwise_recomputation() {
        let (cfg, ch, v) = random_instance(4, 2, 2, 2, 14);
        let mut raw = cfg.config().clone();
        raw.qos_targets_bits = vec![1.5, 0.5];
        let cfg = raw.validate().unwrap();
        let mut state = SolverState::new(v.clone(), &cfg);
        state.receivers = update_receivers(&ch, &v, cfg.noise_power()).unwrap();
        state.weights = update_weights(&state.receivers, &ch, &v).unwrap();
        state.aux = PairGrid::zeros(2, 2);
        for k in 0..2 {
            let w = &state.weights[k];
            let u = &state.receivers[k];
            // determinant of a 2×2 Hermitian matrix by hand
            let det = (w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)]).re;
            let wuu = w * (u.adjoint() * u);
            let tr = w[(0, 0)].re + w[(1, 1)].re + cfg.noise_power() * (wuu[(0, 0)].re + wuu[(1, 1)].re);
            let want = det.ln() + 2.0 - cfg.qos_targets_bits()[k] * LN_2 - tr;
            let got = qos_surrogate_slack(&state, &ch, &cfg, k).unwrap();
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }
}
