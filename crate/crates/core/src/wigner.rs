//! Spin Wigner function from orthonormal multipole operators and
//! Condon-Shortley spherical harmonics, sampled on the equal-area grid
//! (phi, J cos theta).

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{QpError, QpResult};
use crate::qcore::{CMat, QuditState};
use crate::C64;

fn twice(x: f64) -> QpResult<i64> {
    let t = 2.0 * x;
    if (t - t.round()).abs() > 1e-9 || !t.is_finite() {
        return Err(QpError::InvalidArgument(format!("{x} is not a half-integer")));
    }
    Ok(t.round() as i64)
}

/// Coefficients <j1 m1; j2 m2 | J M> for one (j1, j2, J), indexed by
/// (m1 + j1, M + J) with m2 = M - m1. Doubled quantum numbers throughout.
#[derive(Debug)]
struct CgBlock {
    tj1: i64,
    tj: i64,
    c: Vec<f64>,
}

impl CgBlock {
    fn get(&self, tm1: i64, tm: i64) -> f64 {
        let r = ((tm1 + self.tj1) / 2) as usize;
        let col = ((tm + self.tj) / 2) as usize;
        self.c[r * (self.tj as usize + 1) + col]
    }
}

fn raise(tj: i64, tm: i64) -> f64 {
    // sqrt(j(j+1) - m(m+1)) from doubled values
    (((tj - tm) * (tj + tm + 2)) as f64 / 4.0).max(0.0).sqrt()
}

fn lower(tj: i64, tm: i64) -> f64 {
    (((tj + tm) * (tj - tm + 2)) as f64 / 4.0).max(0.0).sqrt()
}

fn build_block(tj1: i64, tj2: i64, tj: i64) -> CgBlock {
    let n1 = (tj1 + 1) as usize;
    let nm = (tj + 1) as usize;
    let mut blk = CgBlock {
        tj1,
        tj,
        c: vec![0.0; n1 * nm],
    };
    let idx = |tm1: i64, tm: i64| ((tm1 + tj1) / 2) as usize * nm + ((tm + tj) / 2) as usize;
    let in1 = |tm1: i64| tm1.abs() <= tj1;
    let in2 = |tm2: i64| tm2.abs() <= tj2;
    // highest weight from J+ |J J> = 0
    let lo = (-tj1).max(tj - tj2);
    let hi = tj1.min(tj + tj2);
    let mut tm1 = lo;
    let mut val = 1.0;
    let mut norm = 0.0;
    while tm1 <= hi {
        blk.c[idx(tm1, tj)] = val;
        norm += val * val;
        let next = tm1 + 2;
        if next <= hi {
            val = -val * raise(tj1, tm1) / raise(tj2, tj - next);
        }
        tm1 = next;
    }
    let sign = blk.c[idx(tj1, tj)].signum();
    let scale = sign / norm.sqrt();
    let mut tm1 = lo;
    while tm1 <= hi {
        blk.c[idx(tm1, tj)] *= scale;
        tm1 += 2;
    }
    // lower M with J- = j1- + j2-
    let mut tm = tj;
    while tm > -tj {
        let nrm = lower(tj, tm);
        let mut tm1 = -tj1;
        while tm1 <= tj1 {
            let tm2 = tm - 2 - tm1;
            if in2(tm2) {
                let mut acc = 0.0;
                if in1(tm1 + 2) && in2(tm - tm1 - 2) {
                    acc += lower(tj1, tm1 + 2) * blk.c[idx(tm1 + 2, tm)];
                }
                if in2(tm2 + 2) {
                    acc += lower(tj2, tm2 + 2) * blk.c[idx(tm1, tm)];
                }
                blk.c[idx(tm1, tm - 2)] = acc / nrm;
            }
            tm1 += 2;
        }
        tm -= 2;
    }
    blk
}

type BlockCache = Mutex<HashMap<(i64, i64, i64), Arc<CgBlock>>>;

fn block(tj1: i64, tj2: i64, tj: i64) -> Arc<CgBlock> {
    static CACHE: OnceLock<BlockCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("cache poisoned").get(&(tj1, tj2, tj)) {
        return b.clone();
    }
    let b = Arc::new(build_block(tj1, tj2, tj));
    cache
        .lock()
        .expect("cache poisoned")
        .entry((tj1, tj2, tj))
        .or_insert(b)
        .clone()
}

/// <j1 m1; j2 m2 | J M> in the Condon-Shortley convention, zero when the
/// selection rules fail.
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> QpResult<f64> {
    let (tj1, tm1, tj2, tm2, tj, tm) = (twice(j1)?, twice(m1)?, twice(j2)?, twice(m2)?, twice(j)?, twice(m)?);
    if tj1 < 0 || tj2 < 0 || tj < 0 {
        return Err(QpError::InvalidArgument("negative angular momentum".into()));
    }
    let parity_ok = (tj1 + tm1) % 2 == 0 && (tj2 + tm2) % 2 == 0 && (tj + tm) % 2 == 0 && (tj1 + tj2 + tj) % 2 == 0;
    if !parity_ok
        || tm1 + tm2 != tm
        || tm1.abs() > tj1
        || tm2.abs() > tj2
        || tm.abs() > tj
        || tj > tj1 + tj2
        || tj < (tj1 - tj2).abs()
    {
        return Ok(0.0);
    }
    Ok(block(tj1, tj2, tj).get(tm1, tm))
}

/// Orthonormal multipole operator T_kq for spin J = (D-1)/2, rows ordered by
/// descending m as for J_z.
pub fn multipole_operator(dim: usize, k: usize, q: i64) -> QpResult<CMat> {
    let tj = dim as i64 - 1;
    let tk = 2 * k as i64;
    if k > tj as usize || q.abs() > k as i64 {
        return Err(QpError::InvalidArgument(format!("multipole ({k}, {q}) outside spin {}/2", tj)));
    }
    let blk = block(tj, tk, tj);
    let pref = ((2 * k + 1) as f64 / dim as f64).sqrt();
    let mut t = CMat::zeros(dim, dim);
    for col in 0..dim {
        let tmp = tj - 2 * col as i64;
        let tm = tmp + 2 * q;
        if tm.abs() > tj {
            continue;
        }
        let row = ((tj - tm) / 2) as usize;
        t[(row, col)] = C64::new(pref * blk.get(tmp, tm), 0.0);
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultipoleDecomposition {
    pub dim: usize,
    /// coefficients[k][q + k] = tr(rho T_kq†).
    pub coefficients: Vec<Vec<C64>>,
}

impl MultipoleDecomposition {
    pub fn get(&self, k: usize, q: i64) -> C64 {
        self.coefficients[k][(q + k as i64) as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coefficients.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

pub fn multipoles(rho: &QuditState) -> QpResult<MultipoleDecomposition> {
    multipoles_of(rho.matrix())
}

fn multipoles_of(rho: &CMat) -> QpResult<MultipoleDecomposition> {
    let d = rho.nrows();
    let mut coefficients = Vec::with_capacity(d);
    for k in 0..d {
        let mut row = Vec::with_capacity(2 * k + 1);
        for q in -(k as i64)..=(k as i64) {
            let t = multipole_operator(d, k, q)?;
            // tr(rho T†) = sum_ij rho_ij conj(T_ij)
            let v = rho.iter().zip(t.iter()).map(|(a, b)| a * b.conj()).sum();
            row.push(v);
        }
        coefficients.push(row);
    }
    Ok(MultipoleDecomposition { dim: d, coefficients })
}

/// Fully normalized associated Legendre values P̄_k^q(x) for 0 <= q <= k <= kmax,
/// so that Y_kq = P̄_k^q(cos theta) exp(i q phi), Condon-Shortley phase included.
pub fn normalized_legendre(kmax: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut p = vec![vec![0.0; kmax + 1]; kmax + 1];
    p[0][0] = 1.0 / (4.0 * PI).sqrt();
    for q in 1..=kmax {
        p[q][q] = -((2 * q + 1) as f64 / (2 * q) as f64).sqrt() * s * p[q - 1][q - 1];
    }
    for q in 0..kmax {
        p[q + 1][q] = ((2 * q + 3) as f64).sqrt() * x * p[q][q];
    }
    for q in 0..=kmax {
        for k in q + 2..=kmax {
            let (kf, qf) = (k as f64, q as f64);
            let a = ((4.0 * kf * kf - 1.0) / (kf * kf - qf * qf)).sqrt();
            let b = (((kf - 1.0) * (kf - 1.0) - qf * qf) / (4.0 * (kf - 1.0) * (kf - 1.0) - 1.0)).sqrt();
            p[k][q] = a * (x * p[k - 1][q] - b * p[k - 2][q]);
        }
    }
    p
}

/// Y_kq(theta, phi).
pub fn spherical_harmonic(k: usize, q: i64, theta: f64, phi: f64) -> C64 {
    let p = normalized_legendre(k, theta.cos());
    let aq = q.unsigned_abs() as usize;
    if aq > k {
        return C64::new(0.0, 0.0);
    }
    let y = C64::from_polar(p[k][aq], aq as f64 * phi);
    if q >= 0 {
        y
    } else if aq % 2 == 0 {
        y.conj()
    } else {
        -y.conj()
    }
}

/// Convention constant c with W = c sum rho_kq Y_kq and ∫ W dΩ = 1.
pub fn convention_constant(dim: usize) -> f64 {
    (dim as f64 / (4.0 * PI)).sqrt()
}

/// Wigner function at one point.
pub fn wigner_at(m: &MultipoleDecomposition, theta: f64, phi: f64) -> C64 {
    let d = m.dim;
    let p = normalized_legendre(d - 1, theta.cos());
    eval(m, &p, phi) * convention_constant(d)
}

fn eval(m: &MultipoleDecomposition, p: &[Vec<f64>], phi: f64) -> C64 {
    let mut w = C64::new(0.0, 0.0);
    for k in 0..m.dim {
        w += m.get(k, 0) * p[k][0];
        for q in 1..=k {
            let e = C64::from_polar(p[k][q], q as f64 * phi);
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            w += m.get(k, q as i64) * e + m.get(k, -(q as i64)) * e.conj() * sign;
        }
    }
    w
}

#[derive(Clone, Debug, Serialize)]
pub struct WignerGrid {
    pub dim: usize,
    pub phi: Vec<f64>,
    /// Cell centres in z = J cos theta.
    pub z: Vec<f64>,
    /// values[iz][iphi], averaged over each z cell.
    pub values: Vec<Vec<f64>>,
    pub convention: f64,
    pub max_imaginary: f64,
}

impl WignerGrid {
    pub fn resolution(&self) -> (usize, usize) {
        (self.z.len(), self.phi.len())
    }

    /// Solid angle of every cell.
    pub fn cell_area(&self) -> f64 {
        let j = (self.dim as f64 - 1.0) / 2.0;
        let dz = 2.0 * j / self.z.len() as f64;
        (2.0 * PI / self.phi.len() as f64) * dz / j
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().flatten().sum::<f64>() * self.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }

    /// (phi, z, value) of the largest sample.
    pub fn peak(&self) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for (iz, row) in self.values.iter().enumerate() {
            for (ip, &v) in row.iter().enumerate() {
                if v > best.2 {
                    best = (self.phi[ip], self.z[iz], v);
                }
            }
        }
        best
    }

    /// Azimuth of the largest phi marginal.
    pub fn marginal_peak_phi(&self) -> f64 {
        let n = self.phi.len();
        let mut marg = vec![0.0; n];
        for row in &self.values {
            for (m, v) in marg.iter_mut().zip(row) {
                *m += v;
            }
        }
        let (i, _) = marg
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.phi[i]
    }
}

pub const MIN_RESOLUTION: usize = 32;

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            let dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        x[i] = z;
    }
    (x, w)
}

/// Sample W on an equal-area grid with `resolution` cells per axis.
pub fn wigner_grid(rho: &QuditState, resolution: usize) -> QpResult<WignerGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(QpError::InvalidArgument(format!(
            "resolution {resolution} below {MIN_RESOLUTION}"
        )));
    }
    let d = rho.dim();
    let m = multipoles(rho)?;
    let j = (d as f64 - 1.0) / 2.0;
    let nz = resolution;
    let nphi = resolution;
    let phi: Vec<f64> = (0..nphi).map(|i| -PI + 2.0 * PI * i as f64 / nphi as f64).collect();
    let dz = 2.0 * j / nz as f64;
    let z: Vec<f64> = (0..nz).map(|i| -j + (i as f64 + 0.5) * dz).collect();
    // W is a polynomial of degree 2J in cos theta at fixed phi for even q;
    // enough nodes make the cell averages exact for the q = 0 part
    let (gx, gw) = gauss_legendre(d / 2 + 2);
    let c = convention_constant(d);
    let rows: Vec<(Vec<f64>, f64)> = z
        .par_iter()
        .map(|&zc| {
            let legs: Vec<(f64, Vec<Vec<f64>>)> = gx
                .iter()
                .zip(&gw)
                .map(|(&x, &w)| {
                    let zz = zc + 0.5 * dz * x;
                    (0.5 * w, normalized_legendre(d - 1, (zz / j).clamp(-1.0, 1.0)))
                })
                .collect();
            let mut imag: f64 = 0.0;
            let row = phi
                .iter()
                .map(|&ph| {
                    let mut v = C64::new(0.0, 0.0);
                    for (w, p) in &legs {
                        v += eval(&m, p, ph) * *w;
                    }
                    v *= c;
                    imag = imag.max(v.im.abs());
                    v.re
                })
                .collect();
            (row, imag)
        })
        .collect();
    let max_imaginary = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(WignerGrid {
        dim: d,
        phi,
        z,
        values: rows.into_iter().map(|r| r.0).collect(),
        convention: c,
        max_imaginary,
    })
}

/// Estimate tr(rho sigma) as c_D ∫ W_rho W_sigma dΩ, with c_D fixed from the
/// maximally mixed self-overlap on the same grid.
pub fn overlap_from_wigner(rho: &QuditState, sigma: &QuditState, resolution: usize) -> QpResult<f64> {
    if rho.dim() != sigma.dim() {
        return Err(QpError::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let d = rho.dim();
    let raw = |a: &WignerGrid, b: &WignerGrid| -> f64 {
        a.values
            .iter()
            .flatten()
            .zip(b.values.iter().flatten())
            .map(|(x, y)| x * y)
            .sum::<f64>()
            * a.cell_area()
    };
    let mixed = wigner_grid(&QuditState::maximally_mixed(d)?, resolution)?;
    let c_d = (1.0 / d as f64) / raw(&mixed, &mixed);
    let gr = wigner_grid(rho, resolution)?;
    let gs = wigner_grid(sigma, resolution)?;
    Ok(c_d * raw(&gr, &gs))
}

/// |phi⟩ = D^{-1/2} sum_m exp(-i m phi) |J, m⟩.
pub fn phase_state_at(dim: usize, phi: f64) -> QpResult<QuditState> {
    let j = (dim as f64 - 1.0) / 2.0;
    let s = 1.0 / (dim as f64).sqrt();
    let psi = DVector::from_iterator(dim, (0..dim).map(|row| C64::from_polar(s, -(j - row as f64) * phi)));
    QuditState::pure(&psi)
}

/// Phase state number r, centred at phi_r = 2 pi (J - r) / D.
pub fn phase_state(dim: usize, r: usize) -> QpResult<QuditState> {
    phase_state_at(dim, phase_angle(dim, r))
}

pub fn phase_angle(dim: usize, r: usize) -> f64 {
    let j = (dim as f64 - 1.0) / 2.0;
    2.0 * PI * (j - r as f64) / dim as f64
}

/// Wrap an angle into [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}
