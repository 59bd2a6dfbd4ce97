use proptest::prelude::*;
use qpurify::analytic;
use qpurify::feedback;
use qpurify::qcore::{self, c, jz_diagonal, CMat};
use qpurify::rng::NormalStream;
use qpurify::trajectories::{
    apply_feedback, generate_record_increment, run_ensemble, run_trajectory, step_linear, step_nonlinear,
    FeedbackContext, MeasurementModel, Protocol, TrajectoryConfig,
};

fn mixed(d: usize) -> CMat {
    CMat::identity(d, d) / c(d as f64, 0.0)
}

fn random_density(d: usize, seed: u64) -> CMat {
    let mut rng = NormalStream::new(seed, 0);
    let g = CMat::from_fn(d, d, |_, _| c(rng.normal(), rng.normal()));
    let r = &g * g.adjoint();
    let tr = qcore::trace_re(&r);
    r / c(tr, 0.0)
}

#[test]
fn eigenstates_do_not_move() {
    let m = MeasurementModel::qudit(4, 1.0).unwrap();
    let mut rho = CMat::zeros(4, 4);
    rho[(1, 1)] = c(1.0, 0.0);
    for dw in [-0.3, 0.0, 0.5] {
        let next = step_nonlinear(&rho, &m, 1e-3, &[dw]).unwrap();
        assert!(qcore::max_abs_diff(&next, &rho) < 1e-13);
    }
}

#[test]
fn diagonal_states_stay_diagonal() {
    let m = MeasurementModel::qudit(5, 1.0).unwrap();
    let mut rho = mixed(5);
    let mut rng = NormalStream::new(8, 1);
    for _ in 0..500 {
        let inc = generate_record_increment(&rho, &m, 1e-3, &mut rng, false).unwrap();
        rho = step_nonlinear(&rho, &m, 1e-3, &inc.dw).unwrap();
    }
    for i in 0..5 {
        for j in 0..5 {
            if i != j {
                assert!(rho[(i, j)].norm() < 1e-14);
            }
        }
    }
}

#[test]
fn zero_record_decays_coherences_as_a_gaussian() {
    let d = 3;
    let m = MeasurementModel::qudit(d, 1.3).unwrap();
    let rho = random_density(d, 4);
    let dt = 2e-2;
    let next = step_linear(&rho, &m, dt, &[0.0]).unwrap();
    let x = jz_diagonal(d).unwrap();
    for i in 0..d {
        for j in 0..d {
            let f = (-2.0 * 1.3 * (x[i] * x[i] + x[j] * x[j]) * dt).exp();
            assert!((next[(i, j)] - rho[(i, j)] * f).norm() < 1e-15);
        }
    }
}

#[test]
fn linear_steps_compose() {
    // K(dR1) K(dR2) = K(dR1 + dR2) at doubled dt
    let m = MeasurementModel::qudit(4, 1.0).unwrap();
    let rho = random_density(4, 9);
    let two = step_linear(&step_linear(&rho, &m, 1e-3, &[0.02]).unwrap(), &m, 1e-3, &[-0.05]).unwrap();
    let one = step_linear(&rho, &m, 2e-3, &[-0.03]).unwrap();
    assert!(qcore::max_abs_diff(&one, &two) < 1e-15);
}

#[test]
fn record_drift_follows_the_expectation() {
    let m = MeasurementModel::qudit(2, 1.0).unwrap();
    let dt = 1e-2;
    let n = 40_000;
    for (rho, want) in [(mixed(2), 0.0), (up(), 8f64.sqrt() * 0.5 * dt)] {
        let mut rng = NormalStream::new(21, 0);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let r = generate_record_increment(&rho, &m, dt, &mut rng, false).unwrap().dr[0];
            sum += r;
            sq += r * r;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((mean - want).abs() < 4.0 * (dt / n as f64).sqrt(), "{mean} vs {want}");
        assert!((var / dt - 1.0).abs() < 0.03);
    }
}

fn up() -> CMat {
    let mut r = CMat::zeros(2, 2);
    r[(0, 0)] = c(1.0, 0.0);
    r
}

#[test]
fn exact_record_has_the_same_mean() {
    let m = MeasurementModel::qudit(3, 1.0).unwrap();
    let rho = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.6, 0.0), c(0.3, 0.0), c(0.1, 0.0)]));
    let dt = 1e-2;
    let n = 40_000;
    let mut rng = NormalStream::new(5, 2);
    let total: f64 = (0..n)
        .map(|_| generate_record_increment(&rho, &m, dt, &mut rng, true).unwrap().dr[0])
        .sum();
    let want = 8f64.sqrt() * 0.5 * dt;
    assert!((total / n as f64 - want).abs() < 4.0 * (dt / n as f64).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feedback_conjugates_the_state(seed in 0u64..1000, d in 3usize..7) {
        let rho = random_density(d, seed);
        let ctx = FeedbackContext::new(Protocol::QftComplementary, d).unwrap();
        let (out, u) = apply_feedback(&rho, &ctx, None).unwrap();
        prop_assert!(qcore::unitarity_defect(&u) < 1e-10);
        let conj = &u * &rho * u.adjoint();
        prop_assert!(qcore::max_abs_diff(&out, &conj) < 1e-10);
        // the new eigenbasis is unbiased: J_z diagonal entries are flat
        for i in 0..d {
            prop_assert!((out[(i, i)].re - 1.0 / d as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn nonlinear_step_keeps_a_density_matrix(seed in 0u64..1000, dw in -0.2f64..0.2) {
        let m = MeasurementModel::qudit(4, 1.0).unwrap();
        let rho = random_density(4, seed);
        let next = step_nonlinear(&rho, &m, 1e-3, &[dw]).unwrap();
        prop_assert!(qcore::hermiticity_defect(&next) < 1e-12);
        prop_assert!((qcore::trace_re(&next) - 1.0).abs() < 1e-12);
        let (vals, _) = qcore::eigendecompose_descending(&next);
        prop_assert!(vals[3] > -1e-10);
    }
}

#[test]
fn feedback_keeps_pure_states_pure() {
    let mut psi = nalgebra::DVector::from_element(5, c(0.0, 0.0));
    psi[0] = c(0.6, 0.0);
    psi[3] = c(0.0, 0.8);
    let rho = &psi * psi.adjoint();
    let ctx = FeedbackContext::new(Protocol::QftComplementary, 5).unwrap();
    let (out, _) = apply_feedback(&rho, &ctx, None).unwrap();
    let purity: f64 = out.iter().map(|z| z.norm_sqr()).sum();
    assert!((purity - 1.0).abs() < 1e-12);
}

fn qft_cfg(dt: f64, n: usize, seed: u64) -> TrajectoryConfig {
    TrajectoryConfig {
        dim: 4,
        dt,
        t_final: 1.0,
        feedback_interval: 1e-2,
        protocol: Protocol::QftComplementary,
        ensemble_size: n,
        master_seed: seed,
        sample_interval: 0.1,
        ..Default::default()
    }
}

#[test]
fn ensembles_are_deterministic() {
    let cfg = qft_cfg(1e-3, 12, 77);
    let a = run_ensemble(&cfg).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_ensemble(&cfg).unwrap());
    assert_eq!(a, b);
    let other = run_ensemble(&TrajectoryConfig { master_seed: 78, ..cfg }).unwrap();
    assert_ne!(a.mean_l, other.mean_l);
}

#[test]
fn trajectory_is_reproducible_by_index() {
    let cfg = qft_cfg(1e-3, 4, 3);
    let m = cfg.model().unwrap();
    assert_eq!(run_trajectory(&cfg, &m, 2).unwrap(), run_trajectory(&cfg, &m, 2).unwrap());
}

#[test]
fn commuting_qudit_stays_under_one_half() {
    let cfg = TrajectoryConfig {
        dim: 5,
        dt: 1e-3,
        t_final: 5.0,
        ensemble_size: 300,
        master_seed: 12,
        simulate_linear: true,
        sample_interval: 0.5,
        ..Default::default()
    };
    let st = run_ensemble(&cfg).unwrap();
    for (t, l) in st.times.iter().zip(&st.max_l) {
        if *t >= 3.0 {
            assert!(*l <= 0.52, "t={t} max L {l}");
        }
    }
}

#[test]
fn single_qubit_register_is_a_qubit() {
    let kappa = 0.5;
    let base = TrajectoryConfig {
        dt: 1e-3,
        t_final: 2.0,
        ensemble_size: 1500,
        master_seed: 31,
        simulate_linear: true,
        sample_interval: 1.0,
        ..Default::default()
    };
    let reg = run_ensemble(&TrajectoryConfig { dim: 2, qubits: Some(1), gamma: kappa, ..base.clone() }).unwrap();
    let qubit = run_ensemble(&TrajectoryConfig { dim: 2, gamma: 4.0 * kappa, ..base }).unwrap();
    let want = analytic::qbit_mean_impurity(2.0 * 4.0 * kappa, 1.0, false).unwrap();
    for st in [&reg, &qubit] {
        let k = st.times.len() - 1;
        assert!((st.mean_l[k] - want).abs() < 3.0 * st.stderr_l[k], "{} vs {want}", st.mean_l[k]);
    }
}

#[test]
fn qutrit_feedback_every_step_follows_the_rate_law() {
    // for D = 3 every arrangement gives dL = -(8/3) L dt on average
    let dt = 1e-3;
    let cfg = TrajectoryConfig {
        dim: 3,
        dt,
        t_final: 1.0,
        feedback_interval: dt,
        protocol: Protocol::QftComplementary,
        ensemble_size: 200,
        master_seed: 15,
        sample_interval: 0.5,
        ..Default::default()
    };
    let st = run_ensemble(&cfg).unwrap();
    let k = st.times.len() - 1;
    let want = 2.0 / 3.0 * (-8.0f64 / 3.0).exp();
    assert!((st.mean_l[k] - want).abs() < 3.0 * st.stderr_l[k] + 0.02 * want, "{} vs {want}", st.mean_l[k]);
}

#[test]
fn random_register_arrangement_follows_the_flat_rate() {
    let n = 2;
    let kappa = 1.0;
    let cfg = TrajectoryConfig {
        dim: 4,
        qubits: Some(n),
        gamma: kappa,
        dt: 1e-3,
        t_final: 0.6,
        feedback_interval: 1e-3,
        protocol: Protocol::RegisterRandom,
        ensemble_size: 200,
        master_seed: 6,
        simulate_linear: true,
        sample_interval: 0.3,
        ..Default::default()
    };
    let st = run_ensemble(&cfg).unwrap();
    let k = st.times.len() - 1;
    let rate = feedback::register_bounds(n).0;
    // speed-ups are relative to the commuting register rate 4 kappa
    let got = -(st.mean_l[k] / 0.75).ln() / (4.0 * kappa * 0.6);
    assert!(got > 0.6 * rate && got < 1.6 * rate, "rate {got} vs {rate}");
}
