mod common;

use mimo_qos_papc::admm::{self, AdmmWorkspace, QosOutcome};
use mimo_qos_papc::channel::{generate_channels, read_channels, write_channels, ChannelModelParams};
use mimo_qos_papc::linalg;
use mimo_qos_papc::model::{PairGrid, SystemConfig};
use mimo_qos_papc::solver::{self, SolveOptions};
use mimo_qos_papc::wmmse;
use mimo_qos_papc::SolveStatus;
use proptest::prelude::*;

use common::*;

/// `(nt, nr, k, d)` with `K·d ≤ N_t` and `d ≤ N_r`.
fn dims() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..=3, 1usize..=2, 1usize..=2, 0usize..=3).prop_map(|(k, nr, d, extra)| {
        let d = d.min(nr);
        (k * d + extra, nr, k, d)
    })
}

fn standard_cfg(nt: usize, nr: usize, k: usize, d: usize) -> mimo_qos_papc::ValidatedConfig {
    SystemConfig::uniform(nt, nr, k, d, 10.0).validate().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn channels_have_configured_shape((nt, nr, k, d) in dims(), seed in any::<u64>()) {
        let cfg = standard_cfg(nt, nr, k, d);
        let draw = generate_channels(&cfg, &ChannelModelParams::with_seed(seed)).unwrap();
        prop_assert_eq!(draw.channels.users(), k);
        for h in draw.channels.iter() {
            prop_assert_eq!(h.shape(), (nr, nt));
            prop_assert!(linalg::is_finite(h));
        }
    }

    #[test]
    fn channel_file_round_trip((nt, nr, k, d) in dims(), seed in any::<u64>()) {
        let cfg = standard_cfg(nt, nr, k, d);
        let draw = generate_channels(&cfg, &ChannelModelParams::with_seed(seed)).unwrap();
        let mut buf = Vec::new();
        write_channels(&mut buf, &draw).unwrap();
        prop_assert_eq!(read_channels(buf.as_slice()).unwrap(), draw);
    }

    #[test]
    fn mse_matrices_are_psd((nt, nr, k, d) in dims(), seed in 0u64..1_000_000) {
        let inst = unit_instance(seed, nt, nr, k, d);
        let mut r = rng(seed);
        let u: Vec<_> = (0..k).map(|_| gaussian(&mut r, nr, d, 1.0)).collect();
        for user in 0..k {
            let e = wmmse::mse_matrix(&inst.channels, &inst.precoders, &u, user, inst.cfg.noise_power());
            prop_assert!(linalg::min_eigenvalue(&e) >= -1e-10);
        }
    }

    #[test]
    fn block_optimum_objective_is_minus_wsr((nt, nr, k, d) in dims(), seed in 0u64..1_000_000) {
        let inst = unit_instance(seed, nt, nr, k, d);
        let state = mmse_state(&inst);
        let obj = wmmse::wmmse_objective(&state, &inst.channels, &inst.cfg).unwrap();
        let (wsr, _) = wmmse::weighted_sum_rate(&inst.channels, &inst.precoders, &inst.cfg).unwrap();
        prop_assert!((obj + wsr).abs() <= 1e-8 * wsr.abs().max(1.0));
    }

    #[test]
    fn precoder_block_is_feasible_and_descends((nt, nr, k, d) in dims(), seed in 0u64..1_000_000) {
        let inst = unit_instance(seed, nt, nr, k, d);
        let mut r = rng(seed ^ 1);
        let mut state = mmse_state(&inst);
        state.aux = PairGrid::from_fn(k, |_, _| gaussian(&mut r, d, d, 1.0));
        state.duals = PairGrid::from_fn(k, |_, _| gaussian(&mut r, d, d, 0.2));
        let ws = AdmmWorkspace::from_state(&state, &inst.channels, &inst.cfg).unwrap();
        let upd = admm::solve_v_subproblem(&state, &ws, &inst.cfg).unwrap();
        for (p, b) in upd.precoders.antenna_powers().iter().zip(inst.cfg.budgets()) {
            prop_assert!(*p <= b * (1.0 + 1e-9));
        }
        for w in upd.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
        prop_assert!(upd.multipliers.iter().all(|&mu| mu >= 0.0));
    }

    #[test]
    fn aux_block_meets_qos_constraint(seed in 0u64..1_000_000, push in 0.0f64..1.5) {
        let (k, d) = (3, 2);
        let inst = unit_instance(seed, 6, 2, k, d);
        let mut r = rng(seed ^ 2);
        let mut state = mmse_state(&inst);
        state.duals = PairGrid::from_fn(k, |_, _| gaussian(&mut r, d, d, 0.1));
        // Targets that put the QoS slack a random fraction of the way from the
        // unconstrained value to the infimum; past the unconstrained value the
        // constraint is inactive.
        let free = AdmmWorkspace::from_state(&state, &inst.channels, &inst.cfg.without_qos()).unwrap();
        let mut targets = Vec::new();
        for user in 0..k {
            let problem = admm::QosMultiplierProblem::for_user(&state, &free, &inst.cfg, user);
            let (lhs0, floor) = (problem.lhs(0.0), problem.floor());
            let e = lhs0 - push * (lhs0 - floor);
            targets.push((free.slacks[user] - e).max(0.0) / std::f64::consts::LN_2);
        }
        let cfg = inst.cfg.with_qos_targets_bits(&targets).unwrap();
        let ws = AdmmWorkspace::from_state(&state, &inst.channels, &cfg).unwrap();
        prop_assume!(admm::unreachable_users(&ws, &cfg).is_empty());
        let upd = admm::solve_x_subproblem(&state, &ws, &cfg).unwrap();
        for user in 0..k {
            let value = admm::qos_constraint_value(&ws.weights[user], upd.aux.row(user), user);
            let e = ws.slacks[user];
            let scale = e.abs().max(1.0);
            match upd.outcomes[user] {
                QosOutcome::Active { tau } => {
                    prop_assert!(tau > 0.0);
                    prop_assert!((value - e).abs() <= 1e-6 * scale);
                    prop_assert!((tau * (value - e)).abs() <= 1e-6 * scale * tau.max(1.0));
                }
                QosOutcome::Inactive => prop_assert!(value <= e + 1e-9 * scale),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solve_respects_budgets_and_is_deterministic((nt, nr, k, d) in dims(), seed in 0u64..10_000, target in 0.0f64..4.0) {
        let cfg = standard_cfg(nt, nr, k, d).with_iterations(30, 50);
        let cfg = cfg.with_qos_targets_bits(&vec![target; k]).unwrap();
        let ch = generate_channels(&cfg, &ChannelModelParams::with_seed(seed)).unwrap().channels;
        let a = solver::solve(&ch, &cfg, &SolveOptions::default()).unwrap();
        let b = solver::solve(&ch, &cfg, &SolveOptions::default()).unwrap();
        prop_assert!(a.report.same_numbers(&b.report));
        prop_assert_eq!(&a.precoders, &b.precoders);
        prop_assert!(a.precoders.max_antenna_ratio(cfg.budgets()) <= 1.0 + 1e-9);
        prop_assert!(a.report.papc_satisfied.iter().all(|&s| s));
        prop_assert_eq!(a.report.status == SolveStatus::InfeasibleQos, !a.report.infeasible_users.is_empty());
        let n = a.report.iterations_used;
        prop_assert_eq!(a.report.objective_trace.len(), n);
        prop_assert_eq!(a.report.inner_iterations_trace.len(), n);
    }

    #[test]
    fn outer_objective_non_increasing_without_qos((nt, nr, k, d) in dims(), seed in 0u64..10_000) {
        let cfg = standard_cfg(nt, nr, k, d);
        let ch = generate_channels(&cfg, &ChannelModelParams::with_seed(seed)).unwrap().channels;
        let sol = solver::solve(&ch, &cfg, &SolveOptions::default()).unwrap();
        for w in sol.report.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-6 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn outer_objective_non_increasing_at_full_scale() {
    let cfg = standard_cfg(16, 2, 4, 2);
    for seed in 0..8 {
        let ch = generate_channels(&cfg, &ChannelModelParams::with_seed(seed)).unwrap().channels;
        let sol = solver::solve(&ch, &cfg, &SolveOptions::default()).unwrap();
        for w in sol.report.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6 * w[0].abs().max(1.0), "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}
