use proptest::prelude::*;
use qpurify::checks::random_state;
use qpurify::qcore::{self, c, mub_basis_d4, CMat, QuditState};
use qpurify::rng::NormalStream;
use qpurify::wigner::{self, clebsch_gordan, multipole_operator, multipoles, spherical_harmonic};
use std::f64::consts::PI;

fn fact(n: i64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Closed-form sum for the Clebsch-Gordan coefficient, integer-doubled inputs.
fn racah(tj1: i64, tm1: i64, tj2: i64, tm2: i64, tj: i64, tm: i64) -> f64 {
    if tm1 + tm2 != tm || tj > tj1 + tj2 || tj < (tj1 - tj2).abs() || tm1.abs() > tj1 || tm2.abs() > tj2 || tm.abs() > tj
    {
        return 0.0;
    }
    let h = |x: i64| x / 2;
    let pre = ((tj + 1) as f64 * fact(h(tj1 + tj2 - tj)) * fact(h(tj1 - tj2 + tj)) * fact(h(-tj1 + tj2 + tj))
        / fact(h(tj1 + tj2 + tj) + 1))
    .sqrt()
        * (fact(h(tj + tm)) * fact(h(tj - tm)) * fact(h(tj1 - tm1)) * fact(h(tj1 + tm1)) * fact(h(tj2 - tm2)) * fact(h(tj2 + tm2)))
            .sqrt();
    let mut s = 0.0;
    for k in 0..=h(tj1 + tj2 - tj) {
        let den = [
            k,
            h(tj1 + tj2 - tj) - k,
            h(tj1 - tm1) - k,
            h(tj2 + tm2) - k,
            h(tj - tj2 + tm1) + k,
            h(tj - tj1 - tm2) + k,
        ];
        if den.iter().any(|&x| x < 0) {
            continue;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s += sign / den.iter().map(|&x| fact(x)).product::<f64>();
    }
    pre * s
}

#[test]
fn clebsch_gordan_matches_the_closed_form() {
    let mut worst: f64 = 0.0;
    for tj1 in 0..=6i64 {
        for tj2 in 0..=6i64 {
            for tj in ((tj1 - tj2).abs()..=tj1 + tj2).step_by(2) {
                for tm1 in (-tj1..=tj1).step_by(2) {
                    for tm2 in (-tj2..=tj2).step_by(2) {
                        let tm = tm1 + tm2;
                        if tm.abs() > tj {
                            continue;
                        }
                        let got = clebsch_gordan(
                            tj1 as f64 / 2.0,
                            tm1 as f64 / 2.0,
                            tj2 as f64 / 2.0,
                            tm2 as f64 / 2.0,
                            tj as f64 / 2.0,
                            tm as f64 / 2.0,
                        )
                        .unwrap();
                        worst = worst.max((got - racah(tj1, tm1, tj2, tm2, tj, tm)).abs());
                    }
                }
            }
        }
    }
    assert!(worst < 1e-12, "worst {worst}");
}

#[test]
fn clebsch_gordan_rows_are_orthonormal() {
    let (j1, j2) = (2.5f64, 2.0f64);
    let ms = |j: f64| (0..=(2.0 * j) as i64).map(move |k| -j + k as f64);
    let mut big: Vec<(f64, f64)> = Vec::new();
    let mut jj = (j1 - j2).abs();
    while jj <= j1 + j2 + 1e-9 {
        big.extend(ms(jj).map(|m| (jj, m)));
        jj += 1.0;
    }
    for &(ja, ma) in &big {
        for &(jb, mb) in &big {
            let mut s = 0.0;
            for m1 in ms(j1) {
                for m2 in ms(j2) {
                    s += clebsch_gordan(j1, m1, j2, m2, ja, ma).unwrap() * clebsch_gordan(j1, m1, j2, m2, jb, mb).unwrap();
                }
            }
            let want = if ja == jb && ma == mb { 1.0 } else { 0.0 };
            assert!((s - want).abs() < 1e-13);
        }
    }
}

#[test]
fn multipole_operators_are_orthonormal() {
    for d in [2usize, 3, 5] {
        let mut ops = Vec::new();
        for k in 0..d {
            for q in -(k as i64)..=k as i64 {
                ops.push(multipole_operator(d, k, q).unwrap());
            }
        }
        for (a, ta) in ops.iter().enumerate() {
            for (b, tb) in ops.iter().enumerate() {
                let ip = (ta * tb.adjoint()).trace();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - c(want, 0.0)).norm() < 1e-13);
            }
        }
        let t10 = multipole_operator(d, 1, 0).unwrap();
        let jz = qcore::jz_operator(d).unwrap();
        let scale = t10[(0, 0)].re / jz.matrix()[(0, 0)].re;
        assert!(qcore::max_abs_diff(&t10, &(jz.matrix() * c(scale, 0.0))) < 1e-13);
    }
}

#[test]
fn multipoles_of_simple_states() {
    let d = 6;
    let m = multipoles(&QuditState::maximally_mixed(d).unwrap()).unwrap();
    assert!((m.get(0, 0).re - 1.0 / (d as f64).sqrt()).abs() < 1e-14);
    assert!((m.norm_sqr() - 1.0 / d as f64).abs() < 1e-14);
    let mut top = CMat::zeros(d, d);
    top[(0, 0)] = c(1.0, 0.0);
    let m = multipoles(&QuditState::new(top).unwrap()).unwrap();
    for k in 0..d {
        for q in -(k as i64)..=k as i64 {
            let v = m.get(k, q);
            if q == 0 {
                assert!(v.re.abs() > 1e-3);
            } else {
                assert!(v.norm() < 1e-15);
            }
        }
    }
}

#[test]
fn harmonics_are_orthonormal() {
    let n = 200;
    let kmax = 4;
    let mut gram = vec![vec![c(0.0, 0.0); (kmax + 1) * (kmax + 1)]; (kmax + 1) * (kmax + 1)];
    let idx = |k: usize, q: i64| k * k + (q + k as i64) as usize;
    for it in 0..n {
        let x = -1.0 + (it as f64 + 0.5) * 2.0 / n as f64;
        let th = x.acos();
        for ip in 0..n {
            let ph = 2.0 * PI * ip as f64 / n as f64;
            let w = (2.0 / n as f64) * (2.0 * PI / n as f64);
            let ys: Vec<(usize, qpurify::C64)> = (0..=kmax)
                .flat_map(|k| (-(k as i64)..=k as i64).map(move |q| (k, q)))
                .map(|(k, q)| (idx(k, q), spherical_harmonic(k, q, th, ph)))
                .collect();
            for (a, ya) in &ys {
                for (b, yb) in &ys {
                    gram[*a][*b] += ya * yb.conj() * w;
                }
            }
        }
    }
    for (a, row) in gram.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((v - c(want, 0.0)).norm() < 2e-3, "{a} {b} {v}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(seed in 0u64..10_000, d in 2usize..9) {
        let mut rng = NormalStream::new(seed, 1);
        let rho = random_state(d, &mut rng).unwrap();
        let m = multipoles(&rho).unwrap();
        prop_assert!((m.norm_sqr() - rho.purity()).abs() < 1e-12);
    }

    #[test]
    fn wigner_is_real_and_normalized(seed in 0u64..10_000, d in 2usize..7) {
        let mut rng = NormalStream::new(seed, 2);
        let rho = random_state(d, &mut rng).unwrap();
        let g = wigner::wigner_grid(&rho, 32).unwrap();
        prop_assert!(g.max_imaginary < 1e-12);
        prop_assert!((g.integral() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn overlaps_from_the_grid() {
    let mut rng = NormalStream::new(3, 3);
    let a = random_state(4, &mut rng).unwrap();
    let b = random_state(4, &mut rng).unwrap();
    let exact = qcore::trace_re(&(a.matrix() * b.matrix()));
    let est = wigner::overlap_from_wigner(&a, &b, 96).unwrap();
    assert!((est - exact).abs() < 0.02 * exact, "{est} vs {exact}");
}

#[test]
fn phase_states_peak_at_their_angle() {
    for r in 0..10 {
        let g = wigner::wigner_grid(&wigner::phase_state(10, r).unwrap(), 80).unwrap();
        let cell = 2.0 * PI / g.phi.len() as f64;
        assert!(wigner::wrap_angle(g.peak().0 - wigner::phase_angle(10, r)).abs() <= cell);
        assert!(wigner::wrap_angle(g.marginal_peak_phi() - wigner::phase_angle(10, r)).abs() <= cell);
        assert!(g.peak().1.abs() < 1.0);
    }
}

#[test]
fn qubit_up_state_closed_form() {
    let mut top = CMat::zeros(2, 2);
    top[(0, 0)] = c(1.0, 0.0);
    let m = multipoles(&QuditState::new(top).unwrap()).unwrap();
    for th in [0.0, 0.7, 2.0, PI] {
        let w = wigner::wigner_at(&m, th, 1.1);
        let want = (1.0 + 3f64.sqrt() * f64::cos(th)) / (4.0 * PI);
        assert!((w - c(want, 0.0)).norm() < 1e-14);
    }
}

#[test]
fn unbiased_basis_states_have_negative_regions() {
    let m1 = mub_basis_d4(1).unwrap();
    for k in 0..4 {
        let psi = m1.matrix().column(k).into_owned();
        let g = wigner::wigner_grid(&QuditState::pure(&psi).unwrap(), 64).unwrap();
        assert!(g.min() < 0.0, "state {k}");
        assert!((g.integral() - 1.0).abs() < 1e-10);
    }
}
