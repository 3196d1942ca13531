//! Reference computations written independently of the library.
#![allow(dead_code)]

use std::collections::HashMap;

use mimo_qos_papc::linalg::CMat;
use mimo_qos_papc::model::{ChannelSet, PrecoderSet, SolverState, SystemConfig, ValidatedConfig};
use mimo_qos_papc::wmmse;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    })
}

/// Random Hermitian positive definite `n × n` with eigenvalues in `[lo, hi]`.
pub fn random_hpd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> CMat {
    let q = gaussian(rng, n, n, 1.0).qr().q();
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(lo..hi), 0.0)
    }));
    &q * diag * q.adjoint()
}

/// Unit-scale instance: channels and precoders with standard complex
/// Gaussian entries, noise power in `[0.1, 1]`.
pub struct Instance {
    pub cfg: ValidatedConfig,
    pub channels: ChannelSet,
    pub precoders: PrecoderSet,
}

pub fn unit_instance(seed: u64, nt: usize, nr: usize, k: usize, d: usize) -> Instance {
    let mut r = rng(seed);
    let mut raw = SystemConfig::uniform(nt, nr, k, d, 30.0);
    raw.noise_power = r.random_range(0.1..1.0);
    raw.antenna_power_budgets = vec![1.0; nt];
    raw.user_weights = (0..k).map(|_| r.random_range(0.5..2.0)).collect();
    let cfg = raw.validate().unwrap();
    let channels = ChannelSet::new((0..k).map(|_| gaussian(&mut r, nr, nt, 1.0)).collect()).unwrap();
    let precoders = PrecoderSet::new((0..k).map(|_| gaussian(&mut r, nt, d, 0.5)).collect()).unwrap();
    Instance { cfg, channels, precoders }
}

fn ln_abs_det(m: &CMat) -> f64 {
    m.clone().determinant().norm().ln()
}

/// `log det(I + H V V^H H^H (σ²I + Σ_{j≠k} H V_j V_j^H H^H)⁻¹)` via plain
/// determinants and a general inverse.
pub fn rate_oracle(channels: &ChannelSet, precoders: &PrecoderSet, k: usize, noise: f64) -> f64 {
    let h = channels.get(k);
    let nr = h.nrows();
    let mut c = CMat::identity(nr, nr) * Complex64::new(noise, 0.0);
    for (j, v) in precoders.iter().enumerate() {
        if j != k {
            let hv = h * v;
            c += &hv * hv.adjoint();
        }
    }
    let hv = h * precoders.get(k);
    let inner = CMat::identity(nr, nr) + &hv * hv.adjoint() * c.try_inverse().unwrap();
    ln_abs_det(&inner)
}

/// `Σ_k α_k (Tr(W_k E_k) − ln det W_k − d)` with `E_k` expanded term by term.
pub fn p2_oracle(
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    receivers: &[CMat],
    weights: &[CMat],
    cfg: &ValidatedConfig,
) -> f64 {
    let d = cfg.streams();
    let mut total = 0.0;
    for k in 0..cfg.users() {
        let u = &receivers[k];
        let h = channels.get(k);
        let mut e = CMat::identity(d, d) - u.adjoint() * h * precoders.get(k);
        e = &e * e.adjoint() + u.adjoint() * u * Complex64::new(cfg.noise_power(), 0.0);
        for (j, v) in precoders.iter().enumerate() {
            if j != k {
                let x = u.adjoint() * h * v;
                e += &x * x.adjoint();
            }
        }
        let w = &weights[k];
        total += cfg.weights()[k] * ((w * e).trace().re - ln_abs_det(w) - d as f64);
    }
    total
}

/// State with MMSE receivers and weights for `inst`, zero auxiliaries.
pub fn mmse_state(inst: &Instance) -> SolverState {
    let mut s = SolverState::new(inst.precoders.clone(), &inst.cfg);
    s.receivers = wmmse::update_receivers(&inst.channels, &s.precoders, inst.cfg.noise_power()).unwrap();
    s.weights = wmmse::update_weights(&s.receivers, &inst.channels, &s.precoders).unwrap();
    s
}

/// Rows of a CSV file written by the experiment harness, keyed by header.
pub fn read_csv(path: &std::path::Path) -> Vec<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

pub fn field(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}
