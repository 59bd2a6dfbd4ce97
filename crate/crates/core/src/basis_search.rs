//! Search over bases unbiased to J_z for the largest single element of the
//! transformed observable, which sets the binary-state speed-up.
//!
//! A candidate is a phase matrix P with U = exp(iP)/sqrt(D), so every modulus
//! is fixed and unitarity reduces to column orthogonality. Each restart is
//! projected onto that manifold and then climbs |X̆_01|^2 along the tangent
//! space with a Gauss-Newton retraction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{QpError, QpResult};
use crate::feedback::{self, max_offdiag};
use crate::qcore::{jz_diagonal, jz_operator, qft_matrix, unbiasedness_defect, unitarity_defect, CMat, UnbiasedBasis};
use crate::rng::NormalStream;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub dim: usize,
    pub restarts: usize,
    /// Ascent iterations per restart.
    pub budget: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            restarts: 24,
            budget: 400,
            tolerance: 1e-10,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Incumbent {
    pub restart: usize,
    pub s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchResult {
    #[serde(serialize_with = "ser_cmat")]
    pub basis: CMat,
    pub s_best: f64,
    pub history: Vec<Incumbent>,
    /// Location (r, c) of the heaviest element of U† J_z U.
    pub location: (usize, usize),
    pub restarts_converged: usize,
}

fn ser_cmat<S: serde::Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

impl SearchResult {
    pub fn unbiased_basis(&self) -> QpResult<UnbiasedBasis> {
        UnbiasedBasis::with_tolerance(self.basis.clone(), 1e-10)
    }
}

struct Manifold {
    d: usize,
    m: Vec<f64>,
    pairs: Vec<(usize, usize)>,
}

impl Manifold {
    fn new(d: usize) -> QpResult<Self> {
        let pairs = (0..d).flat_map(|a| (a + 1..d).map(move |b| (a, b))).collect();
        Ok(Self {
            d,
            m: jz_diagonal(d)?,
            pairs,
        })
    }

    fn idx(&self, i: usize, col: usize) -> usize {
        i * self.d + col
    }

    /// Real and imaginary parts of the column overlaps sum_i exp(i(P_ib - P_ia)).
    fn residual(&self, p: &[f64]) -> DVector<f64> {
        let n = self.pairs.len();
        let mut r = DVector::zeros(2 * n);
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            let mut z = C64::new(0.0, 0.0);
            for i in 0..self.d {
                z += C64::from_polar(1.0, p[self.idx(i, b)] - p[self.idx(i, a)]);
            }
            r[k] = z.re;
            r[n + k] = z.im;
        }
        r
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.pairs.len();
        let mut j = DMatrix::zeros(2 * n, self.d * self.d);
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            for i in 0..self.d {
                let z = C64::from_polar(1.0, p[self.idx(i, b)] - p[self.idx(i, a)]);
                let dz = C64::new(-z.im, z.re);
                j[(k, self.idx(i, a))] -= dz.re;
                j[(n + k, self.idx(i, a))] -= dz.im;
                j[(k, self.idx(i, b))] += dz.re;
                j[(n + k, self.idx(i, b))] += dz.im;
            }
        }
        j
    }

    /// Gauss-Newton on the overlaps. Returns the converged phases if the
    /// residual drops below `tol`.
    fn retract(&self, mut p: Vec<f64>, iters: usize, tol: f64) -> Option<Vec<f64>> {
        for _ in 0..iters {
            let r = self.residual(&p);
            if r.amax() < tol {
                return Some(p);
            }
            let svd = self.jacobian(&p).svd(true, true);
            let step = svd.solve(&(-r), 1e-10 * svd.singular_values.max()).ok()?;
            for (x, s) in p.iter_mut().zip(step.iter()) {
                *x += s;
            }
        }
        (self.residual(&p).amax() < tol).then_some(p)
    }

    /// |X̆_01|^2 and its gradient in the phases.
    fn objective(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let d = self.d as f64;
        let mut x = C64::new(0.0, 0.0);
        let terms: Vec<C64> = (0..self.d)
            .map(|i| C64::from_polar(self.m[i] / d, p[self.idx(i, 1)] - p[self.idx(i, 0)]))
            .collect();
        for t in &terms {
            x += t;
        }
        let mut g = vec![0.0; self.d * self.d];
        for (i, t) in terms.iter().enumerate() {
            // d X / d P_i1 = i t, d X / d P_i0 = -i t
            let v = 2.0 * (x.conj() * C64::new(-t.im, t.re)).re;
            g[self.idx(i, 1)] = v;
            g[self.idx(i, 0)] = -v;
        }
        (x.norm_sqr(), g)
    }

    fn to_matrix(&self, p: &[f64]) -> CMat {
        let s = 1.0 / (self.d as f64).sqrt();
        CMat::from_fn(self.d, self.d, |i, col| C64::from_polar(s, p[self.idx(i, col)]))
    }

    fn phases(&self, u: &CMat) -> Vec<f64> {
        let mut p = vec![0.0; self.d * self.d];
        for i in 0..self.d {
            for col in 0..self.d {
                p[self.idx(i, col)] = u[(i, col)].arg();
            }
        }
        p
    }

    /// Reorder columns so the heaviest element of U† X U sits at (0, 1).
    fn heaviest_first(&self, p: &[f64]) -> QpResult<Vec<f64>> {
        let w = feedback::basis_weights(&self.to_matrix(p), &jz_operator(self.d)?)?;
        let (_, a, b) = max_offdiag(&w);
        let mut order = vec![a, b];
        order.extend((0..self.d).filter(|&k| k != a && k != b));
        let mut q = vec![0.0; p.len()];
        for i in 0..self.d {
            for (new, &old) in order.iter().enumerate() {
                q[self.idx(i, new)] = p[self.idx(i, old)];
            }
        }
        Ok(q)
    }

    /// Projected gradient ascent with step growth and halving.
    fn ascend(&self, mut p: Vec<f64>, budget: usize, tol: f64) -> Vec<f64> {
        let (mut f, _) = self.objective(&p);
        let mut step = 0.3;
        for _ in 0..budget {
            let (_, g) = self.objective(&p);
            let svd = self.jacobian(&p).svd(false, true);
            let vt = svd.v_t.expect("requested right singular vectors");
            let smax = svd.singular_values.max();
            let g = DVector::from_vec(g);
            let mut gt = g.clone();
            for (k, s) in svd.singular_values.iter().enumerate() {
                if *s > 1e-8 * smax {
                    let row = vt.row(k).transpose();
                    gt -= &row * row.dot(&g);
                }
            }
            let norm = gt.norm();
            if norm < 1e-10 {
                break;
            }
            let mut moved = false;
            while step > 1e-8 {
                let trial: Vec<f64> = p.iter().zip(gt.iter()).map(|(x, v)| x + step * v / norm).collect();
                if let Some(q) = self.retract(trial, 30, tol) {
                    let (fq, _) = self.objective(&q);
                    if fq > f {
                        p = q;
                        f = fq;
                        step *= 1.5;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        p
    }
}

/// Polar factor W V† of U = W S V†.
fn polar(u: &CMat) -> CMat {
    let svd = u.clone().svd(true, true);
    svd.u.expect("left vectors") * svd.v_t.expect("right vectors")
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub basis: Option<UnbiasedBasis>,
    pub unitarity_residual: f64,
    pub unbiasedness_residual: f64,
    pub iterations: usize,
}

/// Alternate between fixing all moduli to 1/sqrt(D) and re-unitarizing,
/// then finish with Gauss-Newton on the phases. A candidate that does not
/// reach 1e-10 in both constraints is rejected.
pub fn project_to_unbiased(u: &CMat) -> QpResult<Projection> {
    let d = u.nrows();
    if u.ncols() != d || d < 2 {
        return Err(QpError::InvalidDimension(d));
    }
    let man = Manifold::new(d)?;
    let s = 1.0 / (d as f64).sqrt();
    let mut cur = u.clone();
    let mut iterations = 0;
    for k in 0..2000 {
        iterations = k;
        let flat = cur.map(|z| if z.norm() > 0.0 { z / z.norm() * s } else { C64::new(s, 0.0) });
        if unitarity_defect(&flat) < 1e-10 {
            cur = flat;
            break;
        }
        cur = polar(&flat);
    }
    let phases = man.phases(&cur);
    let polished = man.retract(phases, 100, 1e-12);
    let m = match polished {
        Some(p) => man.to_matrix(&p),
        None => cur.map(|z| z / z.norm() * s),
    };
    let ur = unitarity_defect(&m);
    let br = unbiasedness_defect(&m);
    let basis = if ur < 1e-10 && br < 1e-10 {
        UnbiasedBasis::with_tolerance(m, 1e-10).ok()
    } else {
        None
    };
    Ok(Projection {
        basis,
        unitarity_residual: ur,
        unbiasedness_residual: br,
        iterations,
    })
}

fn fourier_rows(d: usize, rows: &[usize]) -> CMat {
    let s = 1.0 / (d as f64).sqrt();
    CMat::from_fn(d, d, |i, col| C64::from_polar(s, 2.0 * PI * ((rows[i] * col) % d) as f64 / d as f64))
}

/// Fourier matrix whose rows put the positive J_z eigenvalues on even
/// frequencies; columns c and c + D/2 then differ by the sign of m and the
/// element between them is (1/D) sum |m|.
pub fn signed_fourier(d: usize) -> QpResult<CMat> {
    if d % 2 != 0 {
        return Err(QpError::InvalidArgument(format!("signed Fourier start needs even D, got {d}")));
    }
    let mut rows: Vec<usize> = (0..d).step_by(2).collect();
    rows.extend((1..d).step_by(2));
    Ok(fourier_rows(d, &rows))
}

/// F_a ⊗ F_b for D = a b, when D has a proper factorization.
fn tensor_fourier(d: usize) -> Option<CMat> {
    let a = (2..d).find(|k| d % k == 0 && *k * *k <= d)?;
    let fa = qft_matrix(a).ok()?.into_matrix();
    let fb = qft_matrix(d / a).ok()?.into_matrix();
    Some(fa.kronecker(&fb))
}

fn random_start(d: usize, rng: &mut NormalStream) -> CMat {
    let s = 1.0 / (d as f64).sqrt();
    CMat::from_fn(d, d, |_, _| C64::from_polar(s, 2.0 * PI * rng.uniform()))
}

fn start_for(cfg: &SearchConfig, k: usize, rng: &mut NormalStream) -> QpResult<CMat> {
    let d = cfg.dim;
    let mut warm = vec![qft_matrix(d)?.into_matrix()];
    if d % 2 == 0 {
        warm.push(signed_fourier(d)?);
    } else if let Some(t) = tensor_fourier(d) {
        warm.push(t);
    }
    if k < warm.len() {
        return Ok(warm.swap_remove(k));
    }
    if d % 2 == 1 && k % 2 == 0 {
        let mut rows: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut rows);
        return Ok(fourier_rows(d, &rows));
    }
    Ok(random_start(d, rng))
}

fn run_restart(cfg: &SearchConfig, man: &Manifold, k: usize) -> QpResult<Option<(f64, CMat)>> {
    let mut rng = NormalStream::new(cfg.seed, k as u64);
    let start = start_for(cfg, k, &mut rng)?;
    let proj = project_to_unbiased(&start)?;
    let Some(basis) = proj.basis else {
        return Ok(None);
    };
    let p = man.heaviest_first(&man.phases(basis.matrix()))?;
    let Some(p) = man.retract(p, 50, 1e-12) else {
        return Ok(None);
    };
    let p = man.ascend(p, cfg.budget, 1e-12);
    let u = man.to_matrix(&p);
    if unitarity_defect(&u) > cfg.tolerance || unbiasedness_defect(&u) > cfg.tolerance {
        return Ok(None);
    }
    let s = speedup_of(&u)?;
    Ok(Some((s, u)))
}

/// S = 8 max |(U† J_z U)_rc|^2.
pub fn speedup_of(u: &CMat) -> QpResult<f64> {
    let w = feedback::basis_weights(u, &jz_operator(u.nrows())?)?;
    Ok(8.0 * max_offdiag(&w).0)
}

/// Multi-restart search. Restarts run in parallel; the incumbent is reduced
/// in restart order so the result depends only on the configuration.
pub fn search(cfg: &SearchConfig) -> QpResult<SearchResult> {
    if cfg.dim < 2 || cfg.dim > 16 {
        return Err(QpError::InvalidDimension(cfg.dim));
    }
    if cfg.restarts == 0 {
        return Err(QpError::InvalidArgument("at least one restart".into()));
    }
    let man = Manifold::new(cfg.dim)?;
    let outcomes: Vec<Option<(f64, CMat)>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| run_restart(cfg, &man, k))
        .collect::<QpResult<_>>()?;
    let mut best: Option<(f64, CMat)> = None;
    let mut history = Vec::new();
    let mut converged = 0;
    for (k, out) in outcomes.into_iter().enumerate() {
        let Some((s, u)) = out else { continue };
        converged += 1;
        if best.as_ref().is_none_or(|b| s > b.0) {
            history.push(Incumbent { restart: k, s });
            best = Some((s, u));
        }
    }
    let (_, basis) = best.ok_or_else(|| QpError::InvalidArgument("no restart converged".into()))?;
    let w = feedback::basis_weights(&basis, &jz_operator(cfg.dim)?)?;
    let (m, r, c) = max_offdiag(&w);
    Ok(SearchResult {
        basis,
        s_best: 8.0 * m,
        history,
        location: (r, c),
        restarts_converged: converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub dim: usize,
    pub s_best: f64,
    pub s_lower: f64,
    pub s_upper_all: f64,
    pub s_qft: f64,
}

pub fn speedup_scaling_table(dims: &[usize], template: &SearchConfig) -> QpResult<Vec<ScalingRow>> {
    dims.iter()
        .map(|&d| {
            if !(2..=10).contains(&d) {
                return Err(QpError::InvalidDimension(d));
            }
            let res = search(&SearchConfig { dim: d, ..template.clone() })?;
            let b = feedback::speedup_bounds(d)?;
            Ok(ScalingRow {
                dim: d,
                s_best: res.s_best,
                s_lower: b.lower,
                s_upper_all: b.upper_all,
                s_qft: b.upper_qft,
            })
        })
        .collect()
}
