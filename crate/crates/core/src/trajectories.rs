//! Quantum trajectories under continuous measurement, with optional
//! feedback, and ensemble statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QpError, QpResult};
use crate::feedback::{self, PermutationMode, Weights};
use crate::qcore::{
    c, conjectured_optimal_permutation, eigendecompose_descending, hermitize, jz_operator, mub_basis_d4,
    permutation_matrix, qft_matrix, register_observable, trace_re, worst_permutation, CMat, ObservableMatrix,
    Permutation,
};
use crate::rng::NormalStream;

#[derive(Clone, Debug)]
pub struct MeasurementModel {
    observables: Vec<ObservableMatrix>,
    diag: Vec<Option<Vec<f64>>>,
    rate: f64,
}

impl MeasurementModel {
    pub fn new(observables: Vec<ObservableMatrix>, rate: f64) -> QpResult<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(QpError::InvalidArgument(format!("measurement rate {rate} must be positive")));
        }
        let d = observables
            .first()
            .ok_or_else(|| QpError::InvalidOperator("no observables".into()))?
            .dim();
        for o in &observables {
            if o.dim() != d {
                return Err(QpError::DimensionMismatch { expected: d, got: o.dim() });
            }
        }
        let diag = observables.iter().map(|o| o.diagonal_entries()).collect();
        Ok(Self {
            observables,
            diag,
            rate,
        })
    }

    /// J_z at rate gamma.
    pub fn qudit(dim: usize, gamma: f64) -> QpResult<Self> {
        Self::new(vec![jz_operator(dim)?], gamma)
    }

    /// sigma_z on every qubit, each at rate kappa.
    pub fn register(n: usize, kappa: f64) -> QpResult<Self> {
        Self::new((1..=n).map(|r| register_observable(n, r)).collect::<QpResult<_>>()?, kappa)
    }

    pub fn dim(&self) -> usize {
        self.observables[0].dim()
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn channels(&self) -> usize {
        self.observables.len()
    }

    pub fn observables(&self) -> &[ObservableMatrix] {
        &self.observables
    }

    fn all_diagonal(&self) -> Option<Vec<&[f64]>> {
        self.diag.iter().map(|d| d.as_deref()).collect()
    }

    fn expectation(&self, ch: usize, rho: &CMat) -> f64 {
        match &self.diag[ch] {
            Some(x) => x.iter().enumerate().map(|(i, xi)| xi * rho[(i, i)].re).sum(),
            None => trace_re(&(self.observables[ch].matrix() * rho)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    Commuting,
    QftComplementary,
    MubComplementary(usize),
    WorstPermutation,
    RegisterQft,
    /// Register with a fresh uniformly random arrangement at every feedback.
    RegisterRandom,
}

impl Protocol {
    pub fn is_register(&self) -> bool {
        matches!(self, Protocol::RegisterQft | Protocol::RegisterRandom)
    }
}

impl std::str::FromStr for Protocol {
    type Err = QpError;
    fn from_str(s: &str) -> QpResult<Self> {
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "commuting" | "none" => Protocol::Commuting,
            "qft" => Protocol::QftComplementary,
            "worst" => Protocol::WorstPermutation,
            "register" | "register-qft" => Protocol::RegisterQft,
            "register-random" => Protocol::RegisterRandom,
            _ => {
                if let Some(i) = lower.strip_prefix("mub") {
                    let i: usize = i
                        .trim_start_matches(['-', ':'])
                        .parse()
                        .map_err(|_| QpError::InvalidArgument(format!("unknown protocol {s}")))?;
                    Protocol::MubComplementary(i)
                } else {
                    return Err(QpError::InvalidArgument(format!("unknown protocol {s}")));
                }
            }
        })
    }
}

/// Update rule for the normalized equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonlinearScheme {
    /// Euler-Maruyama with eigenvalue clipping.
    Euler,
    /// K rho K / tr with K = exp(sqrt(2 rate) X dR - 2 rate X^2 dt) and the
    /// Euler record dR = sqrt(8 rate) <X> dt + dW.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dim: usize,
    /// Register size; when set, dim is 2^qubits and gamma is the per-qubit rate.
    pub qubits: Option<usize>,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Time between control unitaries, 0 for none.
    pub feedback_interval: f64,
    pub protocol: Protocol,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub simulate_linear: bool,
    pub scheme: NonlinearScheme,
    /// Spacing of the stored samples.
    pub sample_interval: f64,
    pub keep_records: bool,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            qubits: None,
            gamma: 1.0,
            dt: 1e-4,
            t_final: 2.0,
            feedback_interval: 0.0,
            protocol: Protocol::Commuting,
            ensemble_size: 100,
            master_seed: 1,
            simulate_linear: false,
            scheme: NonlinearScheme::Exponential,
            sample_interval: 0.01,
            keep_records: false,
        }
    }
}

fn steps_per(interval: f64, dt: f64, what: &str) -> QpResult<usize> {
    let k = (interval / dt).round();
    if k < 1.0 || ((k * dt - interval).abs() > 1e-9 * interval.max(dt)) {
        return Err(QpError::InvalidArgument(format!(
            "{what} {interval} is not a positive multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

impl TrajectoryConfig {
    pub fn effective_dim(&self) -> usize {
        self.qubits.map(|n| 1usize << n).unwrap_or(self.dim)
    }

    pub fn validate(&self) -> QpResult<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(QpError::InvalidArgument(format!("dt = {} must be positive", self.dt)));
        }
        if self.t_final < self.dt {
            return Err(QpError::InvalidArgument("t_final must be at least dt".into()));
        }
        if self.ensemble_size == 0 {
            return Err(QpError::InvalidArgument("ensemble size must be positive".into()));
        }
        if self.effective_dim() < 2 {
            return Err(QpError::InvalidDimension(self.effective_dim()));
        }
        let qudit_feedback = !self.protocol.is_register() && self.protocol != Protocol::Commuting;
        if (self.protocol.is_register() && self.qubits.is_none()) || (qudit_feedback && self.qubits.is_some()) {
            return Err(QpError::InvalidArgument(
                "register protocols need qubits and qudit protocols must not set them".into(),
            ));
        }
        if let Protocol::MubComplementary(i) = self.protocol {
            if self.effective_dim() != 4 || !(1..=4).contains(&i) {
                return Err(QpError::InvalidArgument(format!("MUB protocol needs D = 4 and index 1..=4, got {i}")));
            }
        }
        if self.protocol != Protocol::Commuting {
            if self.feedback_interval <= 0.0 {
                return Err(QpError::InvalidArgument("feedback protocols need a feedback interval".into()));
            }
            steps_per(self.feedback_interval, self.dt, "feedback interval")?;
        }
        steps_per(self.sample_interval, self.dt, "sample interval")?;
        Ok(())
    }

    pub fn model(&self) -> QpResult<MeasurementModel> {
        match self.qubits {
            Some(n) => MeasurementModel::register(n, self.gamma),
            None => MeasurementModel::qudit(self.dim, self.gamma),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Record increments of the first channel summed over each sample interval.
    pub dr: Vec<f64>,
    pub v: Vec<f64>,
    pub impurity: Vec<f64>,
    pub log_impurity: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_l: Vec<f64>,
    pub mean_log_l: Vec<f64>,
    pub stderr_l: Vec<f64>,
    pub min_l: Vec<f64>,
    pub max_l: Vec<f64>,
    /// (fraction, quantile of L at each time).
    pub quantiles: Vec<(f64, Vec<f64>)>,
    pub records: Option<Vec<TrajectoryRecord>>,
}

pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Order-statistic quantile with linear interpolation; `sorted` ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordIncrement {
    pub dr: Vec<f64>,
    pub dw: Vec<f64>,
}

/// Draw the record increment of every channel.
///
/// With `exact` the increment over dt is sampled from its true law for a
/// diagonal observable: an outcome i with probability rho_ii, then
/// dR = sqrt(8 rate) x_i dt + N(0, dt). Otherwise dR = sqrt(8 rate) <X> dt + dW.
pub fn generate_record_increment(
    rho: &CMat,
    model: &MeasurementModel,
    dt: f64,
    rng: &mut NormalStream,
    exact: bool,
) -> QpResult<RecordIncrement> {
    let gain = (8.0 * model.rate).sqrt();
    let sd = dt.sqrt();
    let means: Vec<f64> = (0..model.channels()).map(|ch| model.expectation(ch, rho)).collect();
    if exact {
        let diag = model
            .all_diagonal()
            .ok_or_else(|| QpError::InvalidOperator("exact record sampling needs diagonal observables".into()))?;
        let u = rng.uniform() * trace_re(rho);
        let mut acc = 0.0;
        let mut outcome = rho.nrows() - 1;
        for i in 0..rho.nrows() {
            acc += rho[(i, i)].re.max(0.0);
            if u < acc {
                outcome = i;
                break;
            }
        }
        let mut dr = Vec::with_capacity(diag.len());
        let mut dw = Vec::with_capacity(diag.len());
        for (ch, x) in diag.iter().enumerate() {
            let r = gain * x[outcome] * dt + sd * rng.normal();
            dr.push(r);
            dw.push(r - gain * means[ch] * dt);
        }
        Ok(RecordIncrement { dr, dw })
    } else {
        let dw: Vec<f64> = (0..model.channels()).map(|_| sd * rng.normal()).collect();
        let dr = dw.iter().zip(&means).map(|(w, m)| gain * m * dt + w).collect();
        Ok(RecordIncrement { dr, dw })
    }
}

fn normalize(rho: &mut CMat) -> QpResult<()> {
    let tr = trace_re(rho);
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(QpError::IntegrationBlowup {
            t: f64::NAN,
            reason: format!("trace {tr}; reduce dt"),
        });
    }
    *rho /= c(tr, 0.0);
    Ok(())
}

/// Cholesky of the Hermitian matrix m + shift I with a test on the real
/// pivots. nalgebra's complex Cholesky takes complex square roots and so
/// accepts indefinite input.
fn positive_with_shift(m: &CMat, shift: f64) -> bool {
    let d = m.nrows();
    let mut l = CMat::zeros(d, d);
    for j in 0..d {
        let mut pivot = m[(j, j)].re + shift;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return false;
        }
        let root = pivot.sqrt();
        l[(j, j)] = c(root, 0.0);
        for i in j + 1..d {
            let mut z = m[(i, j)];
            for k in 0..j {
                z -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = z / root;
        }
    }
    true
}

/// Clip eigenvalues below zero and renormalize when the state has left the
/// positive cone by more than 1e-12.
fn repair_positivity(rho: &mut CMat) -> QpResult<()> {
    if positive_with_shift(rho, 1e-12) {
        return Ok(());
    }
    let (mut vals, vecs) = eigendecompose_descending(rho);
    for v in vals.iter_mut() {
        *v = v.max(0.0);
    }
    *rho = crate::qcore::reassemble(&vals, &vecs);
    normalize(rho)?;
    if !positive_with_shift(rho, 1e-12) {
        return Err(QpError::IntegrationBlowup {
            t: f64::NAN,
            reason: "state not positive after repair; reduce dt".into(),
        });
    }
    Ok(())
}

/// One Euler-Maruyama step of the normalized SME, summed over channels,
/// followed by trace normalization and positivity repair.
pub fn step_nonlinear(rho: &CMat, model: &MeasurementModel, dt: f64, dw: &[f64]) -> QpResult<CMat> {
    if dw.len() != model.channels() || dw.iter().any(|w| !w.is_finite()) || dt <= 0.0 {
        return Err(QpError::InvalidArgument("bad noise increment".into()));
    }
    let g = model.rate;
    let amp = (2.0 * g).sqrt();
    let mut out = rho.clone();
    for ch in 0..model.channels() {
        let mean = model.expectation(ch, rho);
        match &model.diag[ch] {
            Some(x) => {
                for col in 0..rho.ncols() {
                    for row in 0..rho.nrows() {
                        let (xi, xj) = (x[row], x[col]);
                        let f = -g * dt * (xi - xj) * (xi - xj) + amp * dw[ch] * (xi + xj - 2.0 * mean);
                        out[(row, col)] += rho[(row, col)] * f;
                    }
                }
            }
            None => {
                let xm = model.observables[ch].matrix();
                let xr = xm * rho;
                let rx = rho * xm;
                let dis = xm * rho * xm - (xm * &xr + &rx * xm) * c(0.5, 0.0);
                let inn = &xr + &rx - rho * c(2.0 * mean, 0.0);
                out += dis * c(2.0 * g * dt, 0.0) + inn * c(amp * dw[ch], 0.0);
            }
        }
    }
    out = hermitize(&out);
    normalize(&mut out)?;
    repair_positivity(&mut out)?;
    Ok(out)
}

/// Linear (unnormalized) evolution over dt for a record increment dR, using
/// the exact solution K rho K with K = exp(sqrt(2 rate) X dR - 2 rate X^2 dt),
/// which keeps the state positive for any step.
pub fn step_linear(rho_bar: &CMat, model: &MeasurementModel, dt: f64, dr: &[f64]) -> QpResult<CMat> {
    let diag = model
        .all_diagonal()
        .ok_or_else(|| QpError::InvalidOperator("linear evolution needs diagonal observables".into()))?;
    if dr.len() != diag.len() {
        return Err(QpError::DimensionMismatch {
            expected: diag.len(),
            got: dr.len(),
        });
    }
    let k = linear_factors(&diag, model.rate, dt, dr);
    Ok(CMat::from_fn(rho_bar.nrows(), rho_bar.ncols(), |i, j| rho_bar[(i, j)] * (k[i] * k[j])))
}

fn linear_factors(diag: &[&[f64]], rate: f64, dt: f64, dr: &[f64]) -> Vec<f64> {
    let amp = (2.0 * rate).sqrt();
    let d = diag[0].len();
    (0..d)
        .map(|i| {
            let e: f64 = diag
                .iter()
                .zip(dr)
                .map(|(x, r)| amp * x[i] * r - 2.0 * rate * x[i] * x[i] * dt)
                .sum();
            e.exp()
        })
        .collect()
}

/// Control unitaries for a protocol: the basis map B and the weights of the
/// observable seen from the state's eigenbasis.
#[derive(Clone, Debug)]
pub struct FeedbackContext {
    pub protocol: Protocol,
    pub basis: CMat,
    pub weights: Weights,
    fixed: Option<Permutation>,
}

impl FeedbackContext {
    pub fn new(protocol: Protocol, dim: usize) -> QpResult<Self> {
        let (basis, fixed, weights) = match protocol {
            Protocol::Commuting => {
                return Err(QpError::InvalidArgument("commuting protocol applies no feedback".into()));
            }
            Protocol::QftComplementary => (
                qft_matrix(dim)?.matrix().adjoint(),
                Some(conjectured_optimal_permutation(dim)?),
                feedback::qft_weights(dim)?,
            ),
            Protocol::WorstPermutation => (
                qft_matrix(dim)?.matrix().adjoint(),
                Some(worst_permutation(dim)?),
                feedback::qft_weights(dim)?,
            ),
            Protocol::MubComplementary(i) => (mub_basis_d4(i)?.into_matrix(), None, feedback::mub_weights_d4(i)?),
            Protocol::RegisterQft | Protocol::RegisterRandom => {
                let n = dim.trailing_zeros() as usize;
                if 1usize << n != dim {
                    return Err(QpError::InvalidDimension(dim));
                }
                (qft_matrix(dim)?.matrix().adjoint(), None, feedback::register_weights(n)?)
            }
        };
        Ok(Self {
            protocol,
            basis,
            weights,
            fixed,
        })
    }

    fn permutation(&self, ranked: &[f64], rng: Option<&mut NormalStream>) -> QpResult<Permutation> {
        if let Some(p) = &self.fixed {
            return Ok(p.clone());
        }
        match self.protocol {
            Protocol::RegisterRandom => {
                let rng = rng.ok_or_else(|| QpError::InvalidArgument("random arrangement needs a stream".into()))?;
                let mut map: Vec<usize> = (0..ranked.len()).collect();
                rng.shuffle(&mut map);
                Permutation::new(map)
            }
            _ => {
                let mode = if ranked.len() <= 4 {
                    PermutationMode::Exhaustive
                } else {
                    PermutationMode::Greedy
                };
                Ok(feedback::optimal_permutation(ranked, &self.weights, &mode)?.0)
            }
        }
    }
}

/// Diagonalize, arrange the eigenvalues by the protocol's permutation and
/// rotate so the eigenbasis is unbiased to the measurement basis. Returns the
/// controlled state and the unitary U = B P V† applied.
pub fn apply_feedback(
    rho: &CMat,
    ctx: &FeedbackContext,
    rng: Option<&mut NormalStream>,
) -> QpResult<(CMat, CMat)> {
    let (vals, vecs) = eigendecompose_descending(rho);
    let perm = ctx.permutation(&vals, rng)?;
    let u = &ctx.basis * permutation_matrix(&perm) * vecs.adjoint();
    let arranged = perm.arrange(&vals);
    let controlled = crate::qcore::reassemble(&arranged, &ctx.basis);
    Ok((controlled, u))
}

struct Sampler {
    every: usize,
    times: Vec<f64>,
    l: Vec<f64>,
    dr: Vec<f64>,
    v: Vec<f64>,
    r_total: f64,
    dr_acc: f64,
}

fn impurity_of(rho: &CMat) -> f64 {
    let mut p = 0.0;
    for z in rho.iter() {
        p += z.norm_sqr();
    }
    (1.0 - p).max(0.0)
}

/// Run one trajectory from the maximally mixed state.
pub fn run_trajectory(cfg: &TrajectoryConfig, model: &MeasurementModel, index: u64) -> QpResult<TrajectoryRecord> {
    let d = model.dim();
    let mut rng = NormalStream::new(cfg.master_seed, index);
    let ctx = match cfg.protocol {
        Protocol::Commuting => None,
        p => Some(FeedbackContext::new(p, d)?),
    };
    let n_steps = (cfg.t_final / cfg.dt).round() as usize;
    let fb_every = if ctx.is_some() {
        steps_per(cfg.feedback_interval, cfg.dt, "feedback interval")?
    } else {
        usize::MAX
    };
    let mut s = Sampler {
        every: steps_per(cfg.sample_interval, cfg.dt, "sample interval")?,
        times: vec![0.0],
        l: vec![1.0 - 1.0 / d as f64],
        dr: vec![0.0],
        v: vec![0.0],
        r_total: 0.0,
        dr_acc: 0.0,
    };
    let gain = (8.0 * model.rate).sqrt();
    let diag_only = ctx.is_none() && model.all_diagonal().is_some();
    let mut rho = CMat::identity(d, d) / c(d as f64, 0.0);
    let mut p = vec![1.0 / d as f64; d];
    for k in 0..n_steps {
        let t = (k + 1) as f64 * cfg.dt;
        let dr0 = if diag_only {
            step_diag(&mut p, model, cfg, &mut rng).map_err(|e| at_time(e, t))?
        } else {
            if let Some(ctx) = &ctx {
                if k % fb_every == 0 {
                    rho = apply_feedback(&rho, ctx, Some(&mut rng))?.0;
                }
            }
            let inc = generate_record_increment(&rho, model, cfg.dt, &mut rng, cfg.simulate_linear)?;
            rho = if cfg.simulate_linear || cfg.scheme == NonlinearScheme::Exponential {
                let mut next = step_linear(&rho, model, cfg.dt, &inc.dr)?;
                normalize(&mut next).map_err(|e| at_time(e, t))?;
                next
            } else {
                step_nonlinear(&rho, model, cfg.dt, &inc.dw).map_err(|e| at_time(e, t))?
            };
            inc.dr[0]
        };
        s.r_total += dr0;
        s.dr_acc += dr0;
        if (k + 1) % s.every == 0 {
            let l = if diag_only {
                (1.0 - p.iter().map(|x| x * x).sum::<f64>()).max(0.0)
            } else {
                impurity_of(&rho)
            };
            s.times.push(t);
            s.l.push(l);
            s.dr.push(s.dr_acc);
            s.v.push(s.r_total / (gain * t));
            s.dr_acc = 0.0;
        }
    }
    let log_impurity = s.l.iter().map(|l| l.log10()).collect();
    Ok(TrajectoryRecord {
        times: s.times,
        dr: s.dr,
        v: s.v,
        impurity: s.l,
        log_impurity,
    })
}

fn at_time(e: QpError, t: f64) -> QpError {
    match e {
        QpError::IntegrationBlowup { reason, .. } => QpError::IntegrationBlowup { t, reason },
        other => other,
    }
}

/// Diagonal state under diagonal observables: the commuting sector.
fn step_diag(p: &mut [f64], model: &MeasurementModel, cfg: &TrajectoryConfig, rng: &mut NormalStream) -> QpResult<f64> {
    let diag = model.all_diagonal().expect("diagonal model");
    let g = model.rate;
    let dt = cfg.dt;
    let gain = (8.0 * g).sqrt();
    let sd = dt.sqrt();
    let mut dr = Vec::with_capacity(diag.len());
    if cfg.simulate_linear {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut outcome = p.len() - 1;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                outcome = i;
                break;
            }
        }
        for x in &diag {
            dr.push(gain * x[outcome] * dt + sd * rng.normal());
        }
        let k = linear_factors(&diag, g, dt, &dr);
        for (pi, ki) in p.iter_mut().zip(&k) {
            *pi *= ki * ki;
        }
    } else {
        let amp = (2.0 * g).sqrt();
        let mut f = vec![1.0; p.len()];
        for x in &diag {
            let mean: f64 = x.iter().zip(p.iter()).map(|(a, b)| a * b).sum();
            let dw = sd * rng.normal();
            dr.push(gain * mean * dt + dw);
            for (fi, xi) in f.iter_mut().zip(x.iter()) {
                *fi += 2.0 * amp * dw * (xi - mean);
            }
        }
        for (pi, fi) in p.iter_mut().zip(&f) {
            *pi = (*pi * fi).max(0.0);
        }
    }
    let tr: f64 = p.iter().sum();
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(QpError::IntegrationBlowup {
            t: f64::NAN,
            reason: format!("trace {tr}; reduce dt"),
        });
    }
    for pi in p.iter_mut() {
        *pi /= tr;
    }
    Ok(dr[0])
}

/// Run the ensemble. Trajectory k draws from stream (master_seed, k), and the
/// reduction runs in index order, so the output does not depend on the
/// number of workers.
pub fn run_ensemble(cfg: &TrajectoryConfig) -> QpResult<EnsembleStats> {
    cfg.validate()?;
    let model = cfg.model()?;
    let records: Vec<TrajectoryRecord> = (0..cfg.ensemble_size as u64)
        .into_par_iter()
        .map(|k| run_trajectory(cfg, &model, k))
        .collect::<QpResult<_>>()?;
    Ok(aggregate(records, cfg.keep_records))
}

pub fn aggregate(records: Vec<TrajectoryRecord>, keep: bool) -> EnsembleStats {
    let n = records.len() as f64;
    let m = records[0].times.len();
    let l_at = DMatrix::from_fn(records.len(), m, |k, i| records[k].impurity[i]);
    let mut stats = EnsembleStats {
        times: records[0].times.clone(),
        mean_l: Vec::with_capacity(m),
        mean_log_l: Vec::with_capacity(m),
        stderr_l: Vec::with_capacity(m),
        min_l: Vec::with_capacity(m),
        max_l: Vec::with_capacity(m),
        quantiles: QUANTILES.iter().map(|&q| (q, Vec::with_capacity(m))).collect(),
        records: None,
    };
    for i in 0..m {
        let col: Vec<f64> = l_at.column(i).iter().cloned().collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = if records.len() > 1 {
            col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        stats.mean_l.push(mean);
        stats.stderr_l.push((var / n).sqrt());
        stats
            .mean_log_l
            .push(records.iter().map(|r| r.log_impurity[i]).sum::<f64>() / n);
        let mut sorted = col;
        sorted.sort_by(f64::total_cmp);
        stats.min_l.push(sorted[0]);
        stats.max_l.push(sorted[sorted.len() - 1]);
        for (q, arr) in stats.quantiles.iter_mut() {
            arr.push(quantile_sorted(&sorted, *q));
        }
    }
    if keep {
        stats.records = Some(records);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_parsing() {
        assert_eq!("qft".parse::<Protocol>().unwrap(), Protocol::QftComplementary);
        assert_eq!("mub2".parse::<Protocol>().unwrap(), Protocol::MubComplementary(2));
        assert_eq!("MUB-3".parse::<Protocol>().unwrap(), Protocol::MubComplementary(3));
        assert!("fourier".parse::<Protocol>().is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_eq!(quantile_sorted(&v, 1.0), 3.0);
    }

    #[test]
    fn positivity_test_sees_negative_eigenvalues() {
        let mut m = CMat::identity(2, 2) * c(0.5, 0.0);
        m[(0, 1)] = c(0.0, 0.6);
        m[(1, 0)] = c(0.0, -0.6);
        assert!(!positive_with_shift(&m, 1e-12));
        m[(0, 1)] = c(0.0, 0.4);
        m[(1, 0)] = c(0.0, -0.4);
        assert!(positive_with_shift(&m, 1e-12));
    }

    #[test]
    fn config_rejects_misaligned_feedback() {
        let cfg = TrajectoryConfig {
            protocol: Protocol::QftComplementary,
            dt: 1e-3,
            feedback_interval: 1.5e-3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
