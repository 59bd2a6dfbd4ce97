use approx::assert_relative_eq;
use qpurify::analytic::{self, BoundKind, CommutingSolution, LogGridSpec};
use qpurify::feedback;
use qpurify::trajectories::{run_ensemble, Protocol, TrajectoryConfig};
use std::f64::consts::PI;

/// Composite Simpson rule on [a, b].
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Qubit mean impurity written out directly from its integral form.
fn qubit_oracle(t: f64) -> f64 {
    let k = 4.0 * t;
    let f = |v: f64| (-k * v * v).exp() / (k * v).cosh();
    (-t).exp() / 2.0 * (k / PI).sqrt() * simpson(f, -8.0, 8.0, 400_000)
}

#[test]
fn record_density_is_normalized() {
    for d in [2usize, 3, 5] {
        let s = CommutingSolution::new(d, 1.0).unwrap();
        for t in [0.5, 4.0] {
            let j = s.j();
            let mass = simpson(|v| s.record_density(v, t), -j - 8.0, j + 8.0, 200_000);
            assert!((mass - 1.0).abs() < 1e-8, "D={d} t={t} mass={mass}");
        }
    }
}

#[test]
fn symmetric_and_direct_norms_agree() {
    let s = CommutingSolution::new(5, 1.0).unwrap();
    let a = s.norm_nonsymmetric(1.0, 2.0);
    let b = s.norm_symmetric(1.0, 2.0);
    assert_relative_eq!(a, b, max_relative = 1e-14);
}

#[test]
fn qubit_mean_matches_direct_integral() {
    for t in [0.5, 1.0, 2.0] {
        let oracle = qubit_oracle(t);
        assert!((analytic::mean_impurity(t, 2, 1.0).unwrap() - oracle).abs() < 1e-8);
        assert!((analytic::qbit_mean_impurity(t, 1.0, false).unwrap() - oracle).abs() < 1e-8);
    }
}

#[test]
fn qubit_regression_value() {
    // frozen from the quadrature at first build
    let v = analytic::qbit_mean_impurity(2.0, 1.0, false).unwrap();
    assert_relative_eq!(v, QUBIT_T2, max_relative = 1e-10);
}

const QUBIT_T2: f64 = 0.034_298_704_395_369_41;

#[test]
fn qubit_is_a_lower_bound_for_every_dimension() {
    for t in [0.25, 1.0, 3.0] {
        let q = analytic::qbit_mean_impurity(t, 1.0, false).unwrap();
        for d in 3..=7 {
            assert!(q <= analytic::mean_impurity(t, d, 1.0).unwrap());
        }
    }
}

#[test]
fn qubit_long_time_form_converges() {
    let r = |t: f64| analytic::qbit_mean_impurity(t, 1.0, true).unwrap() / analytic::qbit_mean_impurity(t, 1.0, false).unwrap();
    let (a, b, c) = (r(5.0) - 1.0, r(40.0) - 1.0, r(200.0) - 1.0);
    assert!(a > b && b > c && c > 0.0);
    assert!(c < 5e-3);
}

#[test]
fn short_time_limit_is_maximally_mixed() {
    for d in [2usize, 4, 6] {
        let l = analytic::mean_impurity(1e-7, d, 1.0).unwrap();
        assert!((l - (1.0 - 1.0 / d as f64)).abs() < 1e-4);
    }
}

#[test]
fn two_eigenvalue_approximation() {
    let s = CommutingSolution::new(3, 1.0).unwrap();
    let exact = s.mean_impurity(4.0).unwrap();
    let two = s.mean_impurity_two_eig(4.0).unwrap();
    assert!(two <= exact);
    assert!((exact - two) / exact < 0.05);
    let q = CommutingSolution::new(2, 1.0).unwrap();
    for t in [1.0f64, 3.0] {
        let closed = PI * (-t).exp() / (16.0 * t * PI).sqrt();
        assert_relative_eq!(q.mean_impurity_two_eig_long_time(t), closed, max_relative = 1e-14);
    }
}

#[test]
fn trajectory_bounds() {
    let s = CommutingSolution::new(5, 1.0).unwrap();
    assert!((s.trajectory_bound(BoundKind::Upper, 10.0).unwrap() - 0.5).abs() < 1e-6);
    let ratio = |t: f64| {
        s.trajectory_bound(BoundKind::PseudoLower, t).unwrap() / s.trajectory_bound(BoundKind::PhysicalLikely, t).unwrap()
    };
    assert_relative_eq!(ratio(20.0), ratio(30.0), max_relative = 1e-3);
    let rate = (s.trajectory_bound(BoundKind::PseudoLower, 20.0).unwrap() / s.trajectory_bound(BoundKind::PseudoLower, 30.0).unwrap()).ln() / 10.0;
    assert!((rate - 4.0).abs() < 0.01, "rate {rate}");
    // at short times the inner-midpoint kernel is above the outer one
    assert!(s.kernel(0.5, 0.3) > s.kernel(1.5, 0.3));
}

#[test]
fn distribution_anchors() {
    let s = CommutingSolution::new(5, 1.0).unwrap();
    let dist = s.log_impurity_distribution(2.0, &LogGridSpec::default()).unwrap();
    assert!((dist.total_mass() - 1.0).abs() < 1e-8);
    assert!((dist.mean() + 2.41).abs() < 0.02);
    assert!((dist.quantile(0.2) + 3.1736).abs() < 0.01);
    assert!((s.mean_log_impurity(2.0).unwrap() + 2.41).abs() < 0.02);
    // sharp features
    let upper = s.trajectory_bound(BoundKind::Upper, 2.0).unwrap().log10();
    let pseudo = s.trajectory_bound(BoundKind::PseudoLower, 2.0).unwrap().log10();
    assert!((upper + 0.3010).abs() < 1e-3);
    assert!((pseudo + 2.87).abs() < 0.01);
}

#[test]
fn record_peak_width() {
    let s = CommutingSolution::new(5, 1.0).unwrap();
    let w = s.peak_fwhm(0.0, 4.0).unwrap();
    assert!((w - 0.418).abs() < 0.005);
    assert!((0.83 / 4f64.sqrt() - 0.415).abs() < 1e-12);
}

#[test]
fn time_to_reach_inverts_the_mean() {
    for (d, l) in [(3usize, 1e-2), (5, 1e-3), (4, 1e-4)] {
        let t = analytic::time_to_reach(l, d, 1.0).unwrap();
        assert_relative_eq!(analytic::mean_impurity(t, d, 1.0).unwrap(), l, max_relative = 1e-8);
    }
}

#[test]
fn register_single_qubit_matches_qubit_long_time() {
    let kappa = 0.7;
    for t in [2.0, 5.0] {
        let qubit = analytic::qbit_mean_impurity(t, 4.0 * kappa, true).unwrap();
        assert_relative_eq!(feedback::register_commuting_long_time(1, kappa, t), qubit, max_relative = 1e-14);
    }
}

/// Exact-record ensemble against the quadrature.
fn ensemble_vs_quadrature(t: f64, n: usize) -> (f64, f64, f64) {
    let cfg = TrajectoryConfig {
        dim: 5,
        dt: 1e-3,
        t_final: t,
        protocol: Protocol::Commuting,
        ensemble_size: n,
        master_seed: 404,
        simulate_linear: true,
        sample_interval: t,
        ..Default::default()
    };
    let st = run_ensemble(&cfg).unwrap();
    let k = st.times.len() - 1;
    (st.mean_l[k], st.stderr_l[k], analytic::mean_impurity(t, 5, 1.0).unwrap())
}

#[test]
fn commuting_ensemble_matches_quadrature() {
    for t in [1.0, 2.0] {
        let (m, se, q) = ensemble_vs_quadrature(t, 4000);
        assert!((m - q).abs() < 3.0 * se, "t={t}: ensemble {m} ± {se}, quadrature {q}");
    }
}
