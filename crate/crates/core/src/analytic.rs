//! Closed-form machinery for commuting (no-feedback) measurement of J_z
//! starting from I/D: state, record density, impurity kernel, mean impurity,
//! two-eigenvalue approximation, trajectory bounds and log-impurity
//! distributions.

use serde::Serialize;
use statrs::function::erf::{erf, erfc};
use std::f64::consts::{LN_10, PI};

use crate::error::{QpError, QpResult};
use crate::quad::{bisect, integrate, integrate_pieces, log_sum_exp};

const REL_TOL: f64 = 1e-11;

#[derive(Clone, Debug)]
pub struct CommutingSolution {
    pub dim: usize,
    pub gamma: f64,
    /// J_z eigenvalues J, J-1, ..., -J.
    s: Vec<f64>,
}

impl CommutingSolution {
    pub fn new(dim: usize, gamma: f64) -> QpResult<Self> {
        if dim < 2 {
            return Err(QpError::InvalidDimension(dim));
        }
        if !(gamma > 0.0) {
            return Err(QpError::InvalidArgument(format!("gamma = {gamma}")));
        }
        let j = (dim as f64 - 1.0) / 2.0;
        Ok(Self {
            dim,
            gamma,
            s: (0..dim).map(|k| j - k as f64).collect(),
        })
    }

    pub fn j(&self) -> f64 {
        (self.dim as f64 - 1.0) / 2.0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.s
    }

    /// Diagonal of the unnormalized state at integrated record R.
    pub fn unnormalized_state(&self, r: f64, t: f64) -> Vec<f64> {
        let a = 2.0 * (2.0 * self.gamma).sqrt();
        self.s
            .iter()
            .map(|&s| (-4.0 * self.gamma * s * s * t + a * s * r).exp() / self.dim as f64)
            .collect()
    }

    /// Norm as a sum over m = 0..2J of the (J - m) terms.
    pub fn norm_nonsymmetric(&self, r: f64, t: f64) -> f64 {
        let j = self.j();
        let a = 2.0 * (2.0 * self.gamma).sqrt();
        (0..self.dim)
            .map(|m| {
                let x = j - m as f64;
                (-4.0 * self.gamma * x * x * t + a * x * r).exp()
            })
            .sum::<f64>()
            / self.dim as f64
    }

    /// Norm as a sum over s = -J..J.
    pub fn norm_symmetric(&self, r: f64, t: f64) -> f64 {
        let j = self.j();
        let a = 2.0 * (2.0 * self.gamma).sqrt();
        (0..self.dim)
            .map(|k| {
                let s = -j + k as f64;
                (-4.0 * self.gamma * s * s * t + a * s * r).exp()
            })
            .sum::<f64>()
            / self.dim as f64
    }

    fn log_weights(&self, v: f64, t: f64) -> Vec<f64> {
        let k = 4.0 * self.gamma * t;
        self.s.iter().map(|&s| -k * (s - v) * (s - v)).collect()
    }

    pub fn log_record_density(&self, v: f64, t: f64) -> f64 {
        let k = 4.0 * self.gamma * t;
        log_sum_exp(&self.log_weights(v, t)) + 0.5 * (k / PI).ln() - (self.dim as f64).ln()
    }

    /// Density of the scaled record V = R/(2 sqrt(2 gamma) t).
    pub fn record_density(&self, v: f64, t: f64) -> f64 {
        self.log_record_density(v, t).exp()
    }

    /// Probability that the scaled record lies in [a, b] at time t.
    pub fn record_mass(&self, a: f64, b: f64, t: f64) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        // each peak is normal with standard deviation 1/sqrt(8 gamma t)
        let k = (8.0 * self.gamma * t).sqrt();
        self.s
            .iter()
            .map(|&s| phi_interval(k * (a - s), k * (b - s)))
            .sum::<f64>()
            / self.dim as f64
    }

    /// ln of the impurity kernel, computed from pairwise products of
    /// max-shifted weights so no 1 - (1 - eps) cancellation occurs.
    pub fn log_kernel(&self, v: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return (1.0 - 1.0 / self.dim as f64).ln();
        }
        let lw = self.log_weights(v, t);
        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|&x| (x - m).exp()).collect();
        let total: f64 = w.iter().sum();
        let n = w.len();
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + w[i];
        }
        let mut cross = 0.0;
        for i in 0..n {
            cross += w[i] * (prefix[i] + prefix[n] - prefix[i + 1]);
        }
        if cross > 0.0 {
            return cross.ln() - 2.0 * total.ln();
        }
        // the runner-up weight underflowed: keep the leading pair in log space
        let mut sorted = lw;
        sorted.sort_by(|a, b| b.total_cmp(a));
        2f64.ln() + sorted[1] - sorted[0]
    }

    /// Impurity of the normalized state at scaled record V.
    pub fn kernel(&self, v: f64, t: f64) -> f64 {
        self.log_kernel(v, t).exp()
    }

    fn tail(&self, t: f64) -> f64 {
        self.j() + 10.0 / (4.0 * self.gamma * t).sqrt()
    }

    fn breakpoints(&self, t: f64) -> Vec<f64> {
        let mut b = vec![-self.tail(t)];
        for k in (0..self.dim).rev() {
            b.push(self.s[k]);
            if k > 0 {
                b.push(self.s[k] + 0.5);
            }
        }
        b.push(self.tail(t));
        b
    }

    /// Mean impurity over all records at time t.
    pub fn mean_impurity(&self, t: f64) -> QpResult<f64> {
        if t <= 0.0 {
            return Ok(1.0 - 1.0 / self.dim as f64);
        }
        let f = |v: f64| (self.log_kernel(v, t) + self.log_record_density(v, t)).exp();
        integrate_pieces(f, &self.breakpoints(t), 1e-300, REL_TOL)
    }

    /// Mean of log10 impurity over all records at time t.
    pub fn mean_log_impurity(&self, t: f64) -> QpResult<f64> {
        if t <= 0.0 {
            return Ok((1.0 - 1.0 / self.dim as f64).log10());
        }
        let f = |v: f64| self.log_kernel(v, t) / LN_10 * self.record_density(v, t);
        integrate_pieces(f, &self.breakpoints(t), 1e-300, REL_TOL)
    }

    /// Two-eigenvalue approximation: 2 R_II + (D - 3) R_I.
    pub fn mean_impurity_two_eig(&self, t: f64) -> QpResult<f64> {
        let (r1, r2) = two_eig_regions(self.dim, self.gamma, t)?;
        Ok(2.0 * r2 + (self.dim as f64 - 3.0) * r1)
    }

    /// Long-time form of the two-eigenvalue approximation.
    pub fn mean_impurity_two_eig_long_time(&self, t: f64) -> f64 {
        let d = self.dim as f64;
        2.0 * (d - 1.0) / d * PI * (-self.gamma * t).exp() / (16.0 * self.gamma * t * PI).sqrt()
    }

    pub fn trajectory_bound(&self, kind: BoundKind, t: f64) -> QpResult<f64> {
        match kind {
            BoundKind::Upper => Ok(self.s[..self.dim - 1]
                .iter()
                .map(|&s| self.kernel(s - 0.5, t))
                .fold(f64::NEG_INFINITY, f64::max)),
            BoundKind::PseudoLower => {
                if self.dim < 3 {
                    return Err(QpError::InvalidArgument(
                        "pseudo-lower bound needs an inner eigenvalue (D >= 3)".into(),
                    ));
                }
                Ok(self.s[1..self.dim - 1]
                    .iter()
                    .map(|&s| self.kernel(s, t))
                    .fold(f64::INFINITY, f64::min))
            }
            BoundKind::PhysicalLikely => Ok(self.kernel(self.j(), t)),
        }
    }

    /// Full width at half maximum of the record-density peak nearest `s`.
    pub fn peak_fwhm(&self, s: f64, t: f64) -> QpResult<f64> {
        let peak = golden(|v| self.log_record_density(v, t), s - 0.25, s + 0.25, true);
        let half = self.record_density(peak, t) / 2.0;
        let g = |v: f64| self.record_density(v, t) - half;
        let left = bisect(g, peak - 0.5, peak, 1e-14)?;
        let right = bisect(g, peak, peak + 0.5, 1e-14)?;
        Ok(right - left)
    }

    /// Monotone pieces of the kernel: (-inf, M_0], [M_0, m_1], ..., [M_{D-2}, inf),
    /// with maxima M near the midpoints and minima m near the inner peaks.
    fn monotone_pieces(&self, t: f64) -> Vec<(f64, f64)> {
        let mut asc = self.s.clone();
        asc.reverse();
        let lk = |v: f64| self.log_kernel(v, t);
        let maxima: Vec<f64> = asc.windows(2).map(|w| golden(lk, w[0], w[1], true)).collect();
        let mut cuts = vec![-self.tail(t)];
        for (k, &mx) in maxima.iter().enumerate() {
            if k > 0 {
                cuts.push(golden(lk, maxima[k - 1], mx, false));
            }
            cuts.push(mx);
        }
        cuts.push(self.tail(t));
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Distribution of l = log10 L over records. D = 2 uses the closed form;
    /// larger D transports record probability through each monotone piece
    /// of the kernel.
    pub fn log_impurity_distribution(&self, t: f64, grid: &LogGridSpec) -> QpResult<ImpurityDistribution> {
        if t <= 0.0 {
            return Err(QpError::InvalidArgument("distribution needs t > 0".into()));
        }
        if self.dim == 2 {
            return qbit_log_impurity_distribution(t, self.gamma, grid);
        }
        let pieces = self.monotone_pieces(t);
        let lk10 = |v: f64| self.log_kernel(v, t) / LN_10;
        let lo = pieces
            .iter()
            .flat_map(|&(a, b)| [lk10(a), lk10(b)])
            .fold(f64::INFINITY, f64::min);
        let hi = pieces
            .iter()
            .flat_map(|&(a, b)| [lk10(a), lk10(b)])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut dist = ImpurityDistribution::empty(lo, hi, grid.bins);
        for &(a, b) in &pieces {
            let (la, lb) = (lk10(a), lk10(b));
            let increasing = lb >= la;
            let n = grid.points_per_region;
            let mut prev_v = a;
            let mut prev_l = la;
            let mut region_mass = 0.0;
            for i in 1..=n {
                let l = la + (lb - la) * i as f64 / n as f64;
                let v = if i == n {
                    b
                } else {
                    let target = |x: f64| lk10(x) - l;
                    let (fa, fb) = (target(prev_v), target(b));
                    // flat extrema can lose the bracket to rounding
                    let v = if fa.signum() == fb.signum() {
                        if fa.abs() <= fb.abs() {
                            prev_v
                        } else {
                            b
                        }
                    } else {
                        bisect(target, prev_v, b, 1e-14)?
                    };
                    if v < prev_v {
                        return Err(QpError::RefineGrid(format!("non-monotone inversion at l = {l}")));
                    }
                    v
                };
                let mass = self.record_mass(prev_v, v, t);
                let (x0, x1) = if increasing { (prev_l, l) } else { (l, prev_l) };
                dist.deposit(x0, x1, mass);
                region_mass += mass;
                prev_v = v;
                prev_l = l;
            }
            dist.region_mass.push(region_mass);
        }
        Ok(dist)
    }
}

/// Regions I and II of the two-eigenvalue approximation.
pub fn two_eig_regions(dim: usize, gamma: f64, t: f64) -> QpResult<(f64, f64)> {
    if t <= 0.0 {
        return Err(QpError::InvalidArgument("two-eigenvalue integrals need t > 0".into()));
    }
    let k = 4.0 * gamma * t;
    let pre = (-gamma * t).exp() / dim as f64 * (k / PI).sqrt();
    let f = |v: f64| gauss_sech(k, v);
    let width = 0.5 + 12.0 / k.sqrt() + 40.0 / k;
    let r1 = integrate_pieces(f, &[-0.5, 0.0, 0.5], 1e-300, REL_TOL)?;
    let r2 = r1 + integrate(f, 0.5, width.max(1.0), 1e-300, REL_TOL)?;
    Ok((pre * r1, pre * r2))
}

fn gauss_sech(k: f64, v: f64) -> f64 {
    // exp(-k v^2) / cosh(k v) without overflow
    let x = (k * v).abs();
    (-k * v * v - x).exp() * 2.0 / (1.0 + (-2.0 * x).exp())
}

/// Exact mean impurity of a qubit, or its long-time closed form.
pub fn qbit_mean_impurity(t: f64, gamma: f64, long_time: bool) -> QpResult<f64> {
    if t <= 0.0 {
        return Ok(0.5);
    }
    if long_time {
        return Ok(PI * (-gamma * t).exp() / (16.0 * gamma * t * PI).sqrt());
    }
    let k = 4.0 * gamma * t;
    let width = 12.0 / k.sqrt() + 40.0 / k;
    let half = integrate(|v| gauss_sech(k, v), 0.0, width, 1e-300, REL_TOL)?;
    Ok((-gamma * t).exp() / 2.0 * (k / PI).sqrt() * 2.0 * half)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    Upper,
    PseudoLower,
    PhysicalLikely,
}

fn phi_interval(a: f64, b: f64) -> f64 {
    // standard normal mass on [a, b] without cancellation in either tail
    let r = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a * r) - erfc(b * r))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * r) - erfc(-a * r))
    } else {
        0.5 * (erf(b * r) - erf(a * r))
    }
}

/// Golden-section search for a maximum (or minimum) of a unimodal function.
fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |x: f64| sign * f(x);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Debug, Serialize)]
pub struct LogGridSpec {
    pub bins: usize,
    pub points_per_region: usize,
}

impl Default for LogGridSpec {
    fn default() -> Self {
        Self {
            bins: 4000,
            points_per_region: 2000,
        }
    }
}

/// Histogram of l = log10 L on a uniform grid.
#[derive(Clone, Debug, Serialize)]
pub struct ImpurityDistribution {
    pub lo: f64,
    pub hi: f64,
    /// Probability mass per bin.
    pub mass: Vec<f64>,
    /// Mass carried by each monotone region (empty for the closed form).
    pub region_mass: Vec<f64>,
}

impl ImpurityDistribution {
    fn empty(lo: f64, hi: f64, bins: usize) -> Self {
        let pad = 1e-9 * (hi - lo).abs().max(1.0);
        Self {
            lo: lo - pad,
            hi: hi + pad,
            mass: vec![0.0; bins.max(1)],
            region_mass: Vec::new(),
        }
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.bins()).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        let w = self.width();
        self.mass.iter().map(|m| m / w).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mean of l from bin centers.
    pub fn mean(&self) -> f64 {
        self.centers().iter().zip(&self.mass).map(|(c, m)| c * m).sum::<f64>() / self.total_mass()
    }

    /// Probability of l <= x, linear within bins.
    pub fn cdf(&self, x: f64) -> f64 {
        let w = self.width();
        let mut acc = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            let a = self.lo + i as f64 * w;
            if x >= a + w {
                acc += m;
            } else {
                if x > a {
                    acc += m * (x - a) / w;
                }
                break;
            }
        }
        acc
    }

    /// Smallest x with cdf(x) = p.
    pub fn quantile(&self, p: f64) -> f64 {
        let target = p * self.total_mass();
        let w = self.width();
        let mut acc = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            if acc + m >= target && m > 0.0 {
                return self.lo + w * (i as f64 + (target - acc) / m);
            }
            acc += m;
        }
        self.hi
    }

    /// Spread `mass` uniformly over [x0, x1] onto the bins.
    fn deposit(&mut self, x0: f64, x1: f64, mass: f64) {
        if mass == 0.0 {
            return;
        }
        let w = self.width();
        let n = self.bins();
        let pos = |x: f64| ((x - self.lo) / w).clamp(0.0, n as f64);
        let (p0, p1) = (pos(x0), pos(x1));
        if p1 - p0 < 1e-12 {
            let i = (p0.floor() as usize).min(n - 1);
            self.mass[i] += mass;
            return;
        }
        let mut i = p0.floor() as usize;
        while i < n && (i as f64) < p1 {
            let a = (i as f64).max(p0);
            let b = ((i + 1) as f64).min(p1);
            if b > a {
                self.mass[i] += mass * (b - a) / (p1 - p0);
            }
            i += 1;
        }
    }
}

/// Closed-form qubit density of l = log10 L.
pub fn qbit_log_impurity_density(l: f64, t: f64, gamma: f64) -> f64 {
    let x = 2.0 * 10f64.powf(l);
    if x >= 1.0 || x <= 0.0 {
        return 0.0;
    }
    let z = (1.0 - x).sqrt();
    // artanh z = ln((1+z)^2 / x) / 2, accurate as z -> 1
    let y = 0.5 * ((1.0 + z) * (1.0 + z) / x).ln();
    let k = 4.0 * gamma * t;
    (-gamma * t).exp() * LN_10 * y.cosh() * (-y * y / k).exp() / (2.0 * (PI * gamma * t).sqrt() * z)
}

fn qbit_log_impurity_distribution(t: f64, gamma: f64, grid: &LogGridSpec) -> QpResult<ImpurityDistribution> {
    // l <-> y = artanh(sqrt(1 - 2*10^l)); the mass element in y is smooth
    let k = 4.0 * gamma * t;
    let ymax = 0.5 * k + 12.0 * k.sqrt() + 10.0;
    let l_of_y = |y: f64| (0.5f64.ln() - 2.0 * (y + (-2.0 * y).exp().ln_1p() - 2f64.ln())) / LN_10;
    let lo = l_of_y(ymax);
    let hi = 0.5f64.log10();
    let mut dist = ImpurityDistribution::empty(lo, hi, grid.bins);
    let y_of_l = |l: f64| {
        let x = 2.0 * 10f64.powf(l);
        if x >= 1.0 {
            0.0
        } else {
            let z = (1.0 - x).sqrt();
            0.5 * ((1.0 + z) * (1.0 + z) / x).ln()
        }
    };
    let g = |y: f64| (-gamma * t - y * y / k).exp() * y.cosh() / (PI * gamma * t).sqrt();
    let w = dist.width();
    for i in 0..dist.bins() {
        let la = dist.lo + i as f64 * w;
        let lb = la + w;
        let (ya, yb) = (y_of_l(lb), y_of_l(la.max(dist.lo)));
        let yb = yb.min(ymax);
        if yb > ya {
            dist.mass[i] = integrate(g, ya, yb, 1e-300, 1e-10)?;
        }
    }
    Ok(dist)
}

pub fn record_density_v(v: f64, t: f64, dim: usize, gamma: f64) -> QpResult<f64> {
    Ok(CommutingSolution::new(dim, gamma)?.record_density(v, t))
}

pub fn impurity_kernel(v: f64, t: f64, dim: usize, gamma: f64) -> QpResult<f64> {
    Ok(CommutingSolution::new(dim, gamma)?.kernel(v, t))
}

pub fn mean_impurity(t: f64, dim: usize, gamma: f64) -> QpResult<f64> {
    CommutingSolution::new(dim, gamma)?.mean_impurity(t)
}

pub fn mean_impurity_two_eig(t: f64, dim: usize, gamma: f64) -> QpResult<(f64, f64)> {
    let c = CommutingSolution::new(dim, gamma)?;
    Ok((c.mean_impurity_two_eig(t)?, c.mean_impurity_two_eig_long_time(t)))
}

pub fn trajectory_bound(kind: BoundKind, t: f64, dim: usize, gamma: f64) -> QpResult<f64> {
    CommutingSolution::new(dim, gamma)?.trajectory_bound(kind, t)
}

pub fn log_impurity_distribution(t: f64, dim: usize, gamma: f64, grid: &LogGridSpec) -> QpResult<ImpurityDistribution> {
    CommutingSolution::new(dim, gamma)?.log_impurity_distribution(t, grid)
}

/// Time at which the mean commuting impurity first drops to `target`.
pub fn time_to_reach(target: f64, dim: usize, gamma: f64) -> QpResult<f64> {
    let c = CommutingSolution::new(dim, gamma)?;
    let l0 = 1.0 - 1.0 / dim as f64;
    if !(target > 0.0 && target < l0) {
        return Err(QpError::Unreachable(target));
    }
    let mut hi = 1.0 / gamma;
    while c.mean_impurity(hi)? > target {
        hi *= 2.0;
        if hi > 1e4 / gamma {
            return Err(QpError::Unreachable(target));
        }
    }
    // bisection in log L for a well-conditioned root
    let f = |t: f64| c.mean_impurity(t).map(|l| l.ln() - target.ln()).unwrap_or(f64::NAN);
    bisect(f, 1e-9 / gamma, hi, 1e-13)
}
