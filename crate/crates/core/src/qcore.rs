//! Operators, states and bases: J_z, the QFT, the D=4 MUBs, permutations and
//! register observables.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use crate::error::{QpError, QpResult};

pub type CMat = DMatrix<C64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest |M_ij - (M†)_ij|.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// Largest |U U† - I| entry.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let p = u * u.adjoint();
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - c(target, 0.0)).norm());
        }
    }
    worst
}

/// Largest deviation of |U_ij| from 1/sqrt(D).
pub fn unbiasedness_defect(u: &CMat) -> f64 {
    let target = 1.0 / (u.nrows() as f64).sqrt();
    u.iter().map(|z| (z.norm() - target).abs()).fold(0.0, f64::max)
}

fn check_dim(d: usize) -> QpResult<()> {
    if d < 2 {
        Err(QpError::InvalidDimension(d))
    } else {
        Ok(())
    }
}

fn check_square(m: &CMat) -> QpResult<usize> {
    if m.nrows() != m.ncols() {
        return Err(QpError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(m.nrows())
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuditState {
    matrix: CMat,
}

impl QuditState {
    pub fn new(matrix: CMat) -> QpResult<Self> {
        let d = check_square(&matrix)?;
        check_dim(d)?;
        let h = hermiticity_defect(&matrix);
        if h > HERMITIAN_TOL {
            return Err(QpError::InvalidState(format!("not Hermitian (defect {h:e})")));
        }
        let tr = trace_re(&matrix);
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(QpError::InvalidState(format!("trace {tr} != 1")));
        }
        let lmin = matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if lmin < -POSITIVITY_TOL {
            return Err(QpError::InvalidState(format!("negative eigenvalue {lmin:e}")));
        }
        Ok(Self { matrix })
    }

    /// Skips validation. Used inside integrators that repair states themselves.
    pub fn new_unchecked(matrix: CMat) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(d: usize) -> QpResult<Self> {
        check_dim(d)?;
        Ok(Self {
            matrix: CMat::identity(d, d) * c(1.0 / d as f64, 0.0),
        })
    }

    pub fn from_spectrum(p: &[f64]) -> QpResult<Self> {
        let m = CMat::from_diagonal(&DVector::from_iterator(p.len(), p.iter().map(|&x| c(x, 0.0))));
        Self::new(m)
    }

    pub fn pure(psi: &DVector<C64>) -> QpResult<Self> {
        let n = psi.norm();
        if n == 0.0 {
            return Err(QpError::InvalidState("zero vector".into()));
        }
        let v = psi / c(n, 0.0);
        Self::new(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn impurity(&self) -> f64 {
        1.0 - self.purity()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableMatrix {
    matrix: CMat,
}

impl ObservableMatrix {
    pub fn new(matrix: CMat) -> QpResult<Self> {
        check_square(&matrix)?;
        let h = hermiticity_defect(&matrix);
        if h > HERMITIAN_TOL {
            return Err(QpError::InvalidOperator(format!("not Hermitian (defect {h:e})")));
        }
        Ok(Self { matrix })
    }

    pub fn from_diagonal(x: &[f64]) -> Self {
        Self {
            matrix: CMat::from_diagonal(&DVector::from_iterator(x.len(), x.iter().map(|&v| c(v, 0.0)))),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Real diagonal if every off-diagonal entry is exactly zero.
    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.matrix[(i, j)] != c(0.0, 0.0) {
                    return None;
                }
            }
        }
        Some((0..n).map(|i| self.matrix[(i, i)].re).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnbiasedBasis {
    matrix: CMat,
}

impl UnbiasedBasis {
    pub fn new(matrix: CMat) -> QpResult<Self> {
        Self::with_tolerance(matrix, UNITARY_TOL)
    }

    pub fn with_tolerance(matrix: CMat, tol: f64) -> QpResult<Self> {
        let d = check_square(&matrix)?;
        check_dim(d)?;
        let u = unitarity_defect(&matrix);
        if u > tol {
            return Err(QpError::InvalidOperator(format!("not unitary (defect {u:e})")));
        }
        let b = unbiasedness_defect(&matrix);
        if b > tol {
            return Err(QpError::InvalidOperator(format!("not unbiased (defect {b:e})")));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }
}

/// Rank i is placed at basis slot `map[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> QpResult<Self> {
        let d = map.len();
        let mut seen = vec![false; d];
        for &m in &map {
            if m >= d || seen[m] {
                return Err(QpError::InvalidArgument(format!("{map:?} is not a bijection")));
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(d: usize) -> Self {
        Self { map: (0..d).collect() }
    }

    /// Build from the slot -> rank listing (the order in which ranks appear
    /// along the diagonal).
    pub fn from_slot_order(order: &[usize]) -> QpResult<Self> {
        let inv = Self::new(order.to_vec())?;
        Ok(inv.inverse())
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.map
    }

    pub fn slot_of(&self, rank: usize) -> usize {
        self.map[rank]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &p) in self.map.iter().enumerate() {
            inv[p] = i;
        }
        Self { map: inv }
    }

    /// slot -> rank listing.
    pub fn slot_order(&self) -> Vec<usize> {
        self.inverse().map
    }

    /// Place ranked values into slots: out[p(i)] = values[i].
    pub fn arrange(&self, ranked: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; ranked.len()];
        for (i, &v) in ranked.iter().enumerate() {
            out[self.map[i]] = v;
        }
        out
    }
}

pub fn jz_diagonal(d: usize) -> QpResult<Vec<f64>> {
    check_dim(d)?;
    let j = (d as f64 - 1.0) / 2.0;
    Ok((0..d).map(|k| j - k as f64).collect())
}

pub fn jz_operator(d: usize) -> QpResult<ObservableMatrix> {
    Ok(ObservableMatrix::from_diagonal(&jz_diagonal(d)?))
}

pub fn qft_matrix(d: usize) -> QpResult<UnbiasedBasis> {
    check_dim(d)?;
    let norm = 1.0 / (d as f64).sqrt();
    let m = CMat::from_fn(d, d, |r, col| {
        // reduce r*c mod D first so the phase stays exact for large indices
        let k = (r * col) % d;
        C64::from_polar(norm, 2.0 * PI * k as f64 / d as f64)
    });
    Ok(UnbiasedBasis { matrix: m })
}

fn from_columns(cols: [[C64; 4]; 4], scale: f64) -> CMat {
    CMat::from_fn(4, 4, |r, col| cols[col][r] * scale)
}

/// M_0 (identity) through M_4, stored column by column.
pub fn mub_bases_d4() -> Vec<CMat> {
    let o = c(1.0, 0.0);
    let m = c(-1.0, 0.0);
    let i = c(0.0, 1.0);
    let n = c(0.0, -1.0);
    let z = c(0.0, 0.0);
    vec![
        from_columns([[o, z, z, z], [z, o, z, z], [z, z, o, z], [z, z, z, o]], 1.0),
        from_columns([[o, o, o, o], [o, o, m, m], [o, m, m, o], [o, m, o, m]], 0.5),
        from_columns([[o, m, n, n], [o, m, i, i], [o, o, i, n], [o, o, n, i]], 0.5),
        // vectors listed in the order (0, 2, 3, 1) of the usual table so that
        // all four bases share one weight pattern
        from_columns([[o, n, o, i], [o, n, m, n], [o, i, m, i], [o, i, o, n]], 0.5),
        from_columns([[o, n, n, m], [o, n, i, o], [o, i, i, m], [o, i, n, o]], 0.5),
    ]
}

pub fn mub_basis_d4(index: usize) -> QpResult<UnbiasedBasis> {
    if !(1..=4).contains(&index) {
        return Err(QpError::InvalidArgument(format!("MUB index {index} not in 1..=4")));
    }
    Ok(UnbiasedBasis {
        matrix: mub_bases_d4().swap_remove(index),
    })
}

pub fn permutation_matrix(p: &Permutation) -> CMat {
    let d = p.dim();
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        m[(p.slot_of(i), i)] = c(1.0, 0.0);
    }
    m
}

/// Zigzag ordering: slots hold ranks (0, 1, 3, 5, ..., 6, 4, 2).
pub fn conjectured_optimal_permutation(d: usize) -> QpResult<Permutation> {
    check_dim(d)?;
    let mut order = vec![0];
    order.extend((1..d).step_by(2));
    let mut evens: Vec<usize> = (2..d).step_by(2).collect();
    evens.reverse();
    order.extend(evens);
    Permutation::from_slot_order(&order)
}

/// Rank 0 at slot 0, rank 1 diametrically opposite at slot floor(D/2), the
/// remaining ranks fill the free slots from the highest slot downwards.
pub fn worst_permutation(d: usize) -> QpResult<Permutation> {
    check_dim(d)?;
    let mut map = vec![0; d];
    map[1] = d / 2;
    let mut free: Vec<usize> = (1..d).filter(|&s| s != d / 2).collect();
    free.reverse();
    for (k, s) in free.into_iter().enumerate() {
        map[k + 2] = s;
    }
    Permutation::new(map)
}

/// U X U†.
pub fn transformed_observable(u: &CMat, x: &ObservableMatrix) -> QpResult<ObservableMatrix> {
    if u.nrows() != x.dim() || u.ncols() != x.dim() {
        return Err(QpError::DimensionMismatch {
            expected: x.dim(),
            got: u.nrows(),
        });
    }
    let m = u * x.matrix() * u.adjoint();
    Ok(ObservableMatrix { matrix: hermitize(&m) })
}

pub fn register_diagonal(n: usize, r: usize) -> QpResult<Vec<f64>> {
    if n == 0 || r == 0 || r > n || n > 20 {
        return Err(QpError::InvalidArgument(format!("register slot {r} of {n} qubits")));
    }
    let shift = n - r;
    Ok((0..1usize << n)
        .map(|i| if (i >> shift) & 1 == 0 { 1.0 } else { -1.0 })
        .collect())
}

/// sigma_z on qubit r (1-based, qubit 1 most significant), identity elsewhere.
pub fn register_observable(n: usize, r: usize) -> QpResult<ObservableMatrix> {
    Ok(ObservableMatrix::from_diagonal(&register_diagonal(n, r)?))
}

/// Eigenvalues sorted descending with column-aligned eigenvectors. Ties keep
/// the solver's original index order.
pub fn eigendecompose_descending(rho: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitize(rho).symmetric_eigen();
    let d = rho.nrows();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMat::from_fn(d, d, |r, col| eig.eigenvectors[(r, idx[col])]);
    (vals, vecs)
}

pub fn reassemble(vals: &[f64], vecs: &CMat) -> CMat {
    let d = vals.len();
    let lam = CMat::from_diagonal(&DVector::from_iterator(d, vals.iter().map(|&v| c(v, 0.0))));
    vecs * lam * vecs.adjoint()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// |M_ij|^2 as a real matrix.
pub fn weights(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jz_small_cases() {
        assert_eq!(jz_diagonal(3).unwrap(), vec![1.0, 0.0, -1.0]);
        assert_eq!(jz_diagonal(2).unwrap(), vec![0.5, -0.5]);
        assert_eq!(jz_diagonal(5).unwrap(), vec![2.0, 1.0, 0.0, -1.0, -2.0]);
        assert!(matches!(jz_operator(1), Err(QpError::InvalidDimension(1))));
    }

    #[test]
    fn qft_d2_is_hadamard() {
        let t = qft_matrix(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let h = CMat::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]);
        assert!(max_abs_diff(t.matrix(), &h) < 1e-15);
    }

    #[test]
    fn qft_transforms_jz_to_jx_at_d2() {
        let t = qft_matrix(2).unwrap();
        let x = transformed_observable(t.matrix(), &jz_operator(2).unwrap()).unwrap();
        let jx = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        assert!(max_abs_diff(x.matrix(), &jx) < 1e-15);
    }

    #[test]
    fn qft_d3_elements() {
        let t = qft_matrix(3).unwrap();
        let x = transformed_observable(t.matrix(), &jz_operator(3).unwrap()).unwrap();
        let q = C64::from_polar(1.0, 2.0 * PI / 3.0);
        for i in 0..3 {
            assert!(x.matrix()[(i, i)].norm() < 1e-15);
        }
        // one cyclic direction carries (1-q)/3, the other its conjugate
        let a = (c(1.0, 0.0) - q) / 3.0;
        let e = x.matrix()[(0, 1)];
        assert!((e - a).norm() < 1e-14 || (e - a.conj()).norm() < 1e-14);
    }

    #[test]
    fn permutation_matrix_convention() {
        let p = Permutation::new(vec![0, 1, 3, 2]).unwrap();
        let m = permutation_matrix(&p);
        assert_eq!(m[(3, 2)], c(1.0, 0.0));
        assert_eq!(m[(2, 3)], c(1.0, 0.0));
        assert!(unitarity_defect(&m) < 1e-15);
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn zigzag_examples() {
        assert_eq!(conjectured_optimal_permutation(4).unwrap().slot_order(), vec![0, 1, 3, 2]);
        assert_eq!(conjectured_optimal_permutation(3).unwrap().slot_order(), vec![0, 1, 2]);
        assert_eq!(
            conjectured_optimal_permutation(6).unwrap().slot_order(),
            vec![0, 1, 3, 5, 4, 2]
        );
    }

    #[test]
    fn worst_permutation_d4() {
        // diag(l0, l3, l1, l2)
        assert_eq!(worst_permutation(4).unwrap().slot_order(), vec![0, 3, 1, 2]);
    }

    #[test]
    fn register_examples() {
        assert_eq!(register_diagonal(1, 1).unwrap(), vec![1.0, -1.0]);
        assert_eq!(register_diagonal(2, 2).unwrap(), vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(register_diagonal(2, 1).unwrap(), vec![1.0, 1.0, -1.0, -1.0]);
        assert!(register_observable(2, 3).is_err());
    }

    #[test]
    fn eigen_sorted() {
        let rho = QuditState::from_spectrum(&[0.2, 0.5, 0.3]).unwrap();
        let (v, u) = eigendecompose_descending(rho.matrix());
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.3).abs() < 1e-15 && (v[2] - 0.2).abs() < 1e-15);
        assert!(max_abs_diff(&reassemble(&v, &u), rho.matrix()) < 1e-14);
    }

    #[test]
    fn mub_identity_and_first_column() {
        let m = mub_bases_d4();
        assert!(max_abs_diff(&m[0], &CMat::identity(4, 4)) < 1e-16);
        for r in 0..4 {
            assert_eq!(m[1][(r, 0)], c(0.5, 0.0));
        }
    }

    #[test]
    fn state_validation() {
        assert!(QuditState::from_spectrum(&[0.5, 0.6]).is_err());
        assert!(QuditState::from_spectrum(&[1.2, -0.2]).is_err());
        assert!((QuditState::maximally_mixed(4).unwrap().impurity() - 0.75).abs() < 1e-15);
    }
}
