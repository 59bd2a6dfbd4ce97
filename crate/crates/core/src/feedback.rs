//! Impurity rates under complementary measurement, permutation choice,
//! speed-up bounds, the D=4 MUB protocol, register rates and speed-up
//! estimates from impurity curves.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::analytic;
use crate::error::{QpError, QpResult};
use crate::qcore::{
    conjectured_optimal_permutation, jz_operator, mub_basis_d4, qft_matrix, register_observable, trace_re,
    transformed_observable, weights, worst_permutation, CMat, ObservableMatrix, Permutation, UnbiasedBasis,
};

pub type Weights = DMatrix<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DlCoefficients {
    /// Coefficient of dt.
    pub drift: f64,
    /// Coefficient of dW.
    pub noise: f64,
}

/// Drift and noise coefficients of dL for one measurement of `x` on `rho`.
pub fn dl_general(rho: &CMat, x: &CMat, gamma: f64) -> QpResult<DlCoefficients> {
    if rho.nrows() != x.nrows() {
        return Err(QpError::DimensionMismatch {
            expected: rho.nrows(),
            got: x.nrows(),
        });
    }
    let rx = rho * x;
    let rho2 = rho * rho;
    let t_rxrx = trace_re(&(&rx * &rx));
    let t_xr = trace_re(&rx);
    let t_xr2 = trace_re(&(x * &rho2));
    let t_r2 = trace_re(&rho2);
    Ok(DlCoefficients {
        drift: -8.0 * gamma * (t_rxrx - 2.0 * t_xr * t_xr2 + t_xr * t_xr * t_r2),
        noise: -4.0 * (2.0 * gamma).sqrt() * (t_xr2 - t_xr * t_r2),
    })
}

/// dL/dt for a diagonal state with slot populations `mu` measured through an
/// observable whose squared moduli are `w`.
pub fn dl_complementary(mu: &[f64], w: &Weights, gamma: f64) -> f64 {
    -8.0 * gamma * quad_form(mu, w)
}

fn quad_form(mu: &[f64], w: &Weights) -> f64 {
    let d = mu.len();
    let mut s = 0.0;
    for r in 0..d {
        for c in 0..d {
            if r != c {
                s += w[(r, c)] * mu[r] * mu[c];
            }
        }
    }
    s
}

/// |X̌_rc|^2 for X̌ = T J_z T† with T the QFT.
pub fn qft_weights(d: usize) -> QpResult<Weights> {
    let t = qft_matrix(d)?;
    Ok(weights(transformed_observable(t.matrix(), &jz_operator(d)?)?.matrix()))
}

/// |X̆_rc|^2 for X̆ = U† X U.
pub fn basis_weights(u: &CMat, x: &ObservableMatrix) -> QpResult<Weights> {
    Ok(weights(transformed_observable(&u.adjoint(), x)?.matrix()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PermutationMode {
    Exhaustive,
    Zigzag,
    Greedy,
    Worst,
}

pub const EXHAUSTIVE_LIMIT: usize = 9;

/// Permutation of the descending spectrum `ranked` that maximizes the
/// impurity decrease, with the rate it achieves (dL/dt at gamma = 1).
pub fn optimal_permutation(ranked: &[f64], w: &Weights, mode: &PermutationMode) -> QpResult<(Permutation, f64)> {
    let d = ranked.len();
    let perm = match mode {
        PermutationMode::Exhaustive => {
            if d > EXHAUSTIVE_LIMIT {
                return Err(QpError::CostGuard(d));
            }
            exhaustive(ranked, w)
        }
        PermutationMode::Zigzag => conjectured_optimal_permutation(d)?,
        PermutationMode::Greedy => greedy(ranked, w),
        PermutationMode::Worst => worst_permutation(d)?,
    };
    let mu = perm.arrange(ranked);
    Ok((perm, dl_complementary(&mu, w, 1.0)))
}

fn better(a: f64, b: f64) -> bool {
    a > b + 1e-12 * b.abs().max(1e-300)
}

fn exhaustive(ranked: &[f64], w: &Weights) -> Permutation {
    let d = ranked.len();
    // block k: permutations whose first entry is k, each in lexicographic order
    let best = (0..d)
        .into_par_iter()
        .map(|first| {
            let mut rest: Vec<usize> = (0..d).filter(|&x| x != first).collect();
            let mut best_map: Vec<usize> = Vec::new();
            let mut best_val = f64::NEG_INFINITY;
            loop {
                let mut map = Vec::with_capacity(d);
                map.push(first);
                map.extend_from_slice(&rest);
                let mut mu = vec![0.0; d];
                for (i, &s) in map.iter().enumerate() {
                    mu[s] = ranked[i];
                }
                let v = quad_form(&mu, w);
                if best_map.is_empty() || better(v, best_val) {
                    best_val = v;
                    best_map = map;
                }
                if !next_permutation(&mut rest) {
                    break;
                }
            }
            (best_map, best_val)
        })
        .collect::<Vec<_>>();
    let mut winner = best[0].clone();
    for cand in best.into_iter().skip(1) {
        if better(cand.1, winner.1) {
            winner = cand;
        }
    }
    Permutation::new(winner.0).expect("exhaustive search yields a bijection")
}

/// Advance to the next lexicographic permutation; false when wrapped.
pub fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Place ranks in order, each at the free slot that adds the most weight
/// against the ranks already placed.
fn greedy(ranked: &[f64], w: &Weights) -> Permutation {
    let d = ranked.len();
    let mut map = vec![usize::MAX; d];
    let mut free: Vec<bool> = vec![true; d];
    map[0] = 0;
    free[0] = false;
    for rank in 1..d {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for slot in 0..d {
            if !free[slot] {
                continue;
            }
            let gain: f64 = (0..rank).map(|r| w[(slot, map[r])] * ranked[r]).sum();
            if best.1 == usize::MAX || better(gain, best.0) {
                best = (gain, slot);
            }
        }
        map[rank] = best.1;
        free[best.1] = false;
    }
    Permutation::new(map).expect("greedy placement yields a bijection")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FictitiousKind {
    Flat,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FictitiousState {
    pub kind: FictitiousKind,
    pub dim: usize,
    pub deficit: f64,
}

impl FictitiousState {
    /// The fictitious state with impurity `l`.
    pub fn matching(kind: FictitiousKind, dim: usize, l: f64) -> QpResult<Self> {
        if dim < 2 {
            return Err(QpError::InvalidDimension(dim));
        }
        let d = dim as f64;
        let deficit = match kind {
            FictitiousKind::Flat => {
                let arg = 1.0 - l * d / (d - 1.0);
                if !(0.0..=1.0).contains(&arg) || l < 0.0 {
                    return Err(QpError::InvalidArgument(format!("impurity {l} out of range")));
                }
                (d - 1.0) / d * (1.0 - arg.sqrt())
            }
            FictitiousKind::Binary => {
                let arg = 1.0 - 2.0 * l;
                if !(0.0..=1.0).contains(&arg) || l < 0.0 {
                    return Err(QpError::InvalidArgument(format!("impurity {l} out of range")));
                }
                (1.0 - arg.sqrt()) / 2.0
            }
        };
        Ok(Self { kind, dim, deficit })
    }

    /// Descending spectrum.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        p[0] = 1.0 - self.deficit;
        match self.kind {
            FictitiousKind::Flat => {
                for x in p.iter_mut().skip(1) {
                    *x = self.deficit / (self.dim as f64 - 1.0);
                }
            }
            FictitiousKind::Binary => p[1] = self.deficit,
        }
        p
    }

    pub fn impurity(&self) -> f64 {
        1.0 - self.spectrum().iter().map(|x| x * x).sum::<f64>()
    }
}

/// Rate constant k in dL/dt = -k gamma L averaged over all permutations, which
/// is also the flat-state rate for circulant weights.
pub fn flat_rate(w: &Weights) -> f64 {
    let d = w.nrows();
    let mut off = 0.0;
    for r in 0..d {
        for c in 0..d {
            if r != c {
                off += w[(r, c)];
            }
        }
    }
    8.0 * off / (d as f64 * (d as f64 - 1.0))
}

/// Largest off-diagonal weight.
pub fn max_offdiag(w: &Weights) -> (f64, usize, usize) {
    let d = w.nrows();
    let mut best = (f64::NEG_INFINITY, 0, 1);
    for r in 0..d {
        for c in 0..d {
            if r != c && w[(r, c)] > best.0 {
                best = (w[(r, c)], r, c);
            }
        }
    }
    best
}

/// Rate constant for the binary state with its pair on the heaviest element.
pub fn binary_rate(w: &Weights) -> f64 {
    8.0 * max_offdiag(w).0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupBounds {
    pub dim: usize,
    pub lower: f64,
    pub upper_qft: f64,
    pub upper_all: f64,
    /// Defined for even D only.
    pub worst_qft: Option<f64>,
    pub global_upper: f64,
}

pub fn speedup_bounds(dim: usize) -> QpResult<SpeedupBounds> {
    if dim < 2 {
        return Err(QpError::InvalidDimension(dim));
    }
    let d = dim as f64;
    Ok(SpeedupBounds {
        dim,
        lower: 2.0 / 3.0 * (d + 1.0),
        upper_qft: 4.0 / (1.0 - (2.0 * PI / d).cos()),
        upper_all: d * d / 2.0,
        worst_qft: (dim % 2 == 0).then_some(2.0),
        global_upper: 2.0 * (d - 1.0) * (d - 1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SpeedupMethod {
    AnalyticLower,
    AnalyticUpperQft,
    MaxElement,
    SimulationInterpolation,
    SpectralFlow,
    GlobalUpper,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupEstimate {
    pub s: f64,
    pub method: SpeedupMethod,
    pub dim: usize,
    pub qubits: Option<usize>,
    /// Location of the heaviest element, for max-element estimates.
    pub location: Option<(usize, usize)>,
}

/// S = 8 max |(U† X U)_rc|^2 over r != c.
pub fn speedup_from_max_element(u: &UnbiasedBasis, x: &ObservableMatrix) -> QpResult<SpeedupEstimate> {
    let w = basis_weights(u.matrix(), x)?;
    let (m, r, c) = max_offdiag(&w);
    Ok(SpeedupEstimate {
        s: 8.0 * m,
        method: SpeedupMethod::MaxElement,
        dim: u.dim(),
        qubits: None,
        location: Some((r, c)),
    })
}

/// Weights of M_i† J_z M_i.
pub fn mub_weights_d4(index: usize) -> QpResult<Weights> {
    let m = mub_basis_d4(index)?;
    basis_weights(m.matrix(), &jz_operator(4)?)
}

/// dL/dt for slot populations `mu` measured in MUB `index`.
pub fn mub_dl_d4(mu: &[f64], index: usize, gamma: f64) -> QpResult<f64> {
    if mu.len() != 4 {
        return Err(QpError::DimensionMismatch {
            expected: 4,
            got: mu.len(),
        });
    }
    Ok(dl_complementary(mu, &mub_weights_d4(index)?, gamma))
}

/// Per-channel weights |X̌^(r)_ij|^2 with X̌^(r) = T X^(r) T†, D = 2^n.
pub fn register_channel_weights(n: usize) -> QpResult<Vec<Weights>> {
    let d = 1usize << n;
    let t = qft_matrix(d)?;
    (1..=n)
        .map(|r| Ok(weights(transformed_observable(t.matrix(), &register_observable(n, r)?)?.matrix())))
        .collect()
}

/// Sum over channels of the squared moduli.
pub fn register_weights(n: usize) -> QpResult<Weights> {
    let chans = register_channel_weights(n)?;
    let d = 1usize << n;
    Ok(chans.iter().fold(Weights::zeros(d, d), |acc, w| acc + w))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegisterRates {
    pub qubits: usize,
    /// dL/dt for the given slot populations.
    pub dl: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn register_rates(n: usize, mu: &[f64], kappa: f64) -> QpResult<RegisterRates> {
    let d = 1usize << n;
    if mu.len() != d {
        return Err(QpError::DimensionMismatch { expected: d, got: mu.len() });
    }
    let w = register_weights(n)?;
    let (lower, upper) = register_bounds(n);
    Ok(RegisterRates {
        qubits: n,
        dl: -8.0 * kappa * quad_form(mu, &w),
        lower,
        upper,
    })
}

/// Speed-up bounds 2n/(2^n - 1) <= S <= 2n.
pub fn register_bounds(n: usize) -> (f64, f64) {
    let d = (1u64 << n) as f64;
    (2.0 * n as f64 / (d - 1.0), 2.0 * n as f64)
}

/// Long-time mean impurity of a commuting register measurement.
pub fn register_commuting_long_time(n: usize, kappa: f64, t: f64) -> f64 {
    n as f64 * PI * (-4.0 * kappa * t).exp() / (8.0 * (PI * kappa * t).sqrt())
}

/// Two-eigenvalue speed-up from the heaviest summed register element,
/// S = 2 max_ij sum_r |X̌^(r)_ij|^2.
pub fn register_xmax(n: usize) -> QpResult<SpeedupEstimate> {
    if !(1..=8).contains(&n) {
        return Err(QpError::InvalidArgument(format!("register size {n} not in 1..=8")));
    }
    let w = register_weights(n)?;
    let (m, r, c) = max_offdiag(&w);
    Ok(SpeedupEstimate {
        s: 2.0 * m,
        method: SpeedupMethod::MaxElement,
        dim: 1 << n,
        qubits: Some(n),
        location: Some((r, c)),
    })
}

/// Time at which a sampled curve (t ascending) first reaches `target`, by
/// linear interpolation in ln L.
pub fn crossing_time(times: &[f64], l: &[f64], target: f64) -> Option<f64> {
    for k in 1..times.len() {
        if l[k] <= target && l[k - 1] > target {
            let (a, b) = (l[k - 1].ln(), l[k].ln());
            let f = (a - target.ln()) / (a - b);
            return Some(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetSpeedup {
    pub target: f64,
    pub t_commute: f64,
    pub t_complementary: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupCurve {
    pub dim: usize,
    pub per_target: Vec<TargetSpeedup>,
    /// Linear extrapolation of S in 1/ln(1/L) to L -> 0.
    pub asymptote: f64,
}

pub const DEFAULT_TARGETS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Speed-up S = t_commute / t_complementary at each target impurity, from
/// complementary crossing times already measured.
pub fn speedup_from_crossings(dim: usize, gamma: f64, crossings: &[(f64, f64)]) -> QpResult<SpeedupCurve> {
    let mut per_target = Vec::new();
    for &(target, t_comp) in crossings {
        let t_comm = analytic::time_to_reach(target, dim, gamma)?;
        per_target.push(TargetSpeedup {
            target,
            t_commute: t_comm,
            t_complementary: t_comp,
            s: t_comm / t_comp,
        });
    }
    let xs: Vec<f64> = per_target.iter().map(|p| 1.0 / (1.0 / p.target).ln()).collect();
    let ys: Vec<f64> = per_target.iter().map(|p| p.s).collect();
    let asymptote = linear_intercept(&xs, &ys);
    Ok(SpeedupCurve {
        dim,
        per_target,
        asymptote,
    })
}

/// Speed-up from a sampled complementary mean-impurity curve.
pub fn asymptotic_speedup_simulation(
    dim: usize,
    gamma: f64,
    times: &[f64],
    mean_l: &[f64],
    targets: &[f64],
) -> QpResult<SpeedupCurve> {
    let mut crossings = Vec::new();
    for &target in targets {
        let t = crossing_time(times, mean_l, target).ok_or(QpError::Unreachable(target))?;
        crossings.push((target, t));
    }
    let mut c = speedup_from_crossings(dim, gamma, &crossings)?;
    c.dim = dim;
    Ok(c)
}

/// Least-squares intercept of y on x (the y value at x = 0).
pub fn linear_intercept(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() == 1 {
        return y[0];
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    my - sxy / sxx * mx
}

/// Least-squares coefficient a of y = a x^2.
pub fn quadratic_only_fit(d: &[f64], s: &[f64]) -> f64 {
    let num: f64 = d.iter().zip(s).map(|(x, y)| x * x * y).sum();
    let den: f64 = d.iter().map(|x| x.powi(4)).sum();
    num / den
}

/// Deterministic evolution of the slot spectrum in the limit of continuous
/// feedback. With the measurement unbiased to the state the eigenvalue noise
/// vanishes at first order, leaving
/// d mu_k/dt = 8 gamma mu_k sum_l w_kl mu_l / (mu_k - mu_l).
pub struct SpectralFlow {
    pub weights: Weights,
    pub perm: Permutation,
    pub gamma: f64,
}

impl SpectralFlow {
    pub fn qft(dim: usize, gamma: f64) -> QpResult<Self> {
        Ok(Self {
            weights: qft_weights(dim)?,
            perm: conjectured_optimal_permutation(dim)?,
            gamma,
        })
    }

    fn rhs(&self, ranked: &[f64]) -> Vec<f64> {
        let d = ranked.len();
        let mu = self.perm.arrange(ranked);
        let mut out = vec![0.0; d];
        for rank in 0..d {
            let k = self.perm.slot_of(rank);
            let mut acc = 0.0;
            for l in 0..d {
                if l != k {
                    let gap = mu[k] - mu[l];
                    if gap != 0.0 {
                        acc += self.weights[(k, l)] * mu[l] / gap;
                    }
                }
            }
            out[rank] = 8.0 * self.gamma * mu[k] * acc;
        }
        out
    }

    /// Start just off I/D with eigenvalue gaps of relative size `split`.
    pub fn initial(dim: usize, split: f64) -> Vec<f64> {
        let j = (dim as f64 - 1.0) / 2.0;
        (0..dim)
            .map(|k| (1.0 + split * (j - k as f64) / j) / dim as f64)
            .collect()
    }

    /// Crossing times of the impurity through each (descending) target,
    /// integrated with an adaptive Dormand-Prince 5(4) scheme.
    pub fn crossing_times(&self, start: &[f64], targets: &[f64], t_max: f64) -> QpResult<Vec<f64>> {
        let imp = |m: &[f64]| 1.0 - m.iter().map(|x| x * x).sum::<f64>();
        let mut y = start.to_vec();
        let mut t = 0.0;
        let mut h = 1e-8;
        let mut out = Vec::new();
        let mut next = 0;
        let mut l_prev = imp(&y);
        while next < targets.len() {
            if t > t_max {
                return Err(QpError::Unreachable(targets[next]));
            }
            let (y5, err) = dopri_step(|v| self.rhs(v), &y, h);
            // relative per component: the small eigenvalues carry the impurity
            let errn = err
                .iter()
                .zip(&y)
                .map(|(e, v)| e / (1e-10 * v.abs() + 1e-300))
                .fold(0.0, f64::max);
            if errn <= 1.0 && y5.iter().all(|v| v.is_finite() && *v >= 0.0) {
                let l_new = imp(&y5);
                while next < targets.len() && l_new <= targets[next] {
                    // interpolate in ln L over the accepted step
                    let (a, b) = (l_prev.ln(), l_new.ln());
                    let f = (a - targets[next].ln()) / (a - b);
                    out.push(t + f * h);
                    next += 1;
                }
                t += h;
                y = y5;
                l_prev = l_new;
                let fac = if errn > 0.0 { 0.9 * errn.powf(-0.2) } else { 5.0 };
                h *= fac.clamp(0.2, 5.0);
            } else {
                let fac = if errn.is_finite() { 0.9 * errn.powf(-0.25) } else { 0.1 };
                h *= fac.clamp(0.05, 0.5);
                if h < 1e-16 {
                    return Err(QpError::IntegrationBlowup {
                        t,
                        reason: "spectral flow step underflow".into(),
                    });
                }
            }
        }
        Ok(out)
    }
}

fn dopri_step<F: Fn(&[f64]) -> Vec<f64>>(f: F, y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f(y));
    for (s, row) in C.iter().enumerate() {
        let yi: Vec<f64> = (0..n)
            .map(|i| y[i] + h * (0..=s).map(|j| row[j] * k[j][i]).sum::<f64>())
            .collect();
        k.push(f(&yi));
    }
    let y5: Vec<f64> = (0..n)
        .map(|i| y[i] + h * (0..6).map(|j| C[5][j] * k[j][i]).sum::<f64>())
        .collect();
    let err = (0..n)
        .map(|i| (h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>()).abs())
        .collect();
    (y5, err)
}

/// Asymptotic QFT speed-up from the continuous-feedback spectral flow.
pub fn qft_speedup_flow(dim: usize, gamma: f64, targets: &[f64]) -> QpResult<SpeedupCurve> {
    let flow = SpectralFlow::qft(dim, gamma)?;
    let start = SpectralFlow::initial(dim, 1e-3);
    let times = flow.crossing_times(&start, targets, 1e3 / gamma)?;
    let crossings: Vec<(f64, f64)> = targets.iter().cloned().zip(times).collect();
    speedup_from_crossings(dim, gamma, &crossings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_permutations() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn fictitious_roundtrip() {
        for &d in &[2usize, 3, 7] {
            for &l in &[1e-6, 0.01, 0.3] {
                let f = FictitiousState::matching(FictitiousKind::Flat, d, l).unwrap();
                assert!((f.impurity() - l).abs() < 1e-12);
                let b = FictitiousState::matching(FictitiousKind::Binary, d, l).unwrap();
                assert!((b.impurity() - l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn register_bound_values() {
        assert_eq!(register_bounds(2), (4.0 / 3.0, 4.0));
        assert!(register_bounds(3).0 < 1.0);
    }

    #[test]
    fn cost_guard() {
        let w = Weights::zeros(10, 10);
        let r = optimal_permutation(&[0.1; 10], &w, &PermutationMode::Exhaustive);
        assert!(matches!(r, Err(QpError::CostGuard(10))));
    }
}
