use clap::Args;
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

use qpurify::analytic::{self, BoundKind, CommutingSolution, LogGridSpec};
use qpurify::basis_search::{self, SearchConfig};
use qpurify::checks::{self, Suite};
use qpurify::feedback;
use qpurify::qcore::{self, CMat, QuditState};
use qpurify::trajectories::{run_ensemble, NonlinearScheme, Protocol, TrajectoryConfig};
use qpurify::wigner;
use qpurify::C64;

use crate::config::{RunArgs, Settings};
use crate::error::CliError;
use crate::output::{Artifacts, Table};

type CliResult = Result<(), CliError>;

fn finish(art: Artifacts, config: impl Serialize, seed: Option<u64>) -> CliResult {
    let value = serde_json::to_value(config).map_err(std::io::Error::other)?;
    let m = art.finish(value, seed)?;
    for f in &m.outputs {
        eprintln!("wrote {} ({} bytes, sha256 {})", f.path, f.bytes, &f.sha256[..16]);
    }
    Ok(())
}

fn time_grid(t: Option<f64>, t_final: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if let Some(t) = t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Validation(format!("--t must be positive, got {t}")));
        }
        return Ok(vec![t]);
    }
    if points == 0 {
        return Err(CliError::Validation("--points must be positive".into()));
    }
    Ok((1..=points).map(|k| t_final * k as f64 / points as f64).collect())
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Evaluate at a single time instead of a grid up to --t-final.
    #[arg(long)]
    t: Option<f64>,
    /// Grid points in (0, t-final].
    #[arg(long, default_value_t = 100)]
    points: usize,
}

fn curve_settings(run: RunArgs, cfg: Option<&Path>) -> Result<Settings, CliError> {
    Settings::resolve(
        run,
        cfg,
        Settings {
            dim: 5,
            t_final: 4.0,
            ..Default::default()
        },
    )
}

pub fn mean_impurity(a: CurveArgs, cfg: Option<&Path>) -> CliResult {
    let s = curve_settings(a.run, cfg)?;
    let sol = CommutingSolution::new(s.dim, s.gamma)?;
    let mut table = Table::new(&["t[1/gamma]", "mean_L[1]", "log10_L[1]", "mean_log10_L[1]"]);
    for t in time_grid(a.t, s.t_final, a.points)? {
        let l = sol.mean_impurity(t)?;
        let ml = sol.mean_log_impurity(t)?;
        table.push(&[t, l, l.log10(), ml]);
        if a.t.is_some() {
            println!("t = {t}: <L> = {l:.6e}, log10 <L> = {:.4}, <log10 L> = {ml:.4}", l.log10());
        }
    }
    let mut art = Artifacts::new(&s.out, "mean-impurity")?;
    art.csv("mean_impurity.csv", &table)?;
    finish(art, json!({ "settings": s, "t": a.t, "points": a.points }), None)
}

pub fn two_eig(a: CurveArgs, cfg: Option<&Path>) -> CliResult {
    let s = curve_settings(a.run, cfg)?;
    let sol = CommutingSolution::new(s.dim, s.gamma)?;
    let mut table = Table::new(&[
        "t[1/gamma]",
        "mean_L[1]",
        "two_eig_L[1]",
        "two_eig_long_time_L[1]",
        "region_I[1]",
        "region_II[1]",
    ]);
    for t in time_grid(a.t, s.t_final, a.points)? {
        let (r1, r2) = analytic::two_eig_regions(s.dim, s.gamma, t)?;
        table.push(&[
            t,
            sol.mean_impurity(t)?,
            sol.mean_impurity_two_eig(t)?,
            sol.mean_impurity_two_eig_long_time(t),
            r1,
            r2,
        ]);
    }
    let mut art = Artifacts::new(&s.out, "two-eig")?;
    art.csv("two_eig.csv", &table)?;
    finish(art, json!({ "settings": s, "t": a.t, "points": a.points }), None)
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Spacing of stored samples (a multiple of --dt).
    #[arg(long, default_value_t = 0.01)]
    sample_interval: f64,
    /// Integrate the linear equation with exactly sampled records.
    #[arg(long)]
    linear: bool,
    /// Update rule for the normalized equation: exponential or euler.
    #[arg(long, default_value = "exponential")]
    scheme: String,
    /// Also write every trajectory's impurity samples.
    #[arg(long)]
    records: bool,
}

fn trajectory_config(s: &Settings, sample_interval: f64, linear: bool, scheme: &str, keep: bool) -> Result<TrajectoryConfig, CliError> {
    let protocol: Protocol = s.protocol.parse()?;
    let scheme = match scheme.to_ascii_lowercase().as_str() {
        "exponential" => NonlinearScheme::Exponential,
        "euler" => NonlinearScheme::Euler,
        other => return Err(CliError::Validation(format!("unknown scheme {other}"))),
    };
    let cfg = TrajectoryConfig {
        dim: s.effective_dim(),
        qubits: s.qubits,
        gamma: s.gamma,
        dt: s.dt,
        t_final: s.t_final,
        feedback_interval: if protocol == Protocol::Commuting { 0.0 } else { s.fb_interval },
        protocol,
        ensemble_size: s.ensemble,
        master_seed: s.seed,
        simulate_linear: linear,
        scheme,
        sample_interval,
        keep_records: keep,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ensemble_table(st: &qpurify::trajectories::EnsembleStats) -> Table {
    let mut headers: Vec<String> = ["t[1/gamma]", "mean_L[1]", "stderr_L[1]", "mean_log10_L[1]", "min_L[1]", "max_L[1]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for (p, _) in &st.quantiles {
        headers.push(format!("q{:02}_L[1]", (p * 100.0).round() as u32));
    }
    let refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let mut table = Table::new(&refs);
    for k in 0..st.times.len() {
        let mut row = vec![st.times[k], st.mean_l[k], st.stderr_l[k], st.mean_log_l[k], st.min_l[k], st.max_l[k]];
        row.extend(st.quantiles.iter().map(|(_, q)| q[k]));
        table.push(&row);
    }
    table
}

pub fn simulate(a: SimulateArgs, cfg: Option<&Path>) -> CliResult {
    let s = Settings::resolve(a.run, cfg, Settings::default())?;
    let tc = trajectory_config(&s, a.sample_interval, a.linear, &a.scheme, a.records)?;
    let st = run_ensemble(&tc)?;
    let mut art = Artifacts::new(&s.out, "simulate")?;
    art.csv("simulate.csv", &ensemble_table(&st))?;
    if let Some(records) = &st.records {
        let mut t = Table::new(&["trajectory[index]", "t[1/gamma]", "L[1]", "V[1]"]);
        for (i, r) in records.iter().enumerate() {
            for k in 0..r.times.len() {
                t.push(&[i as f64, r.times[k], r.impurity[k], r.v[k]]);
            }
        }
        art.csv("trajectories.csv", &t)?;
    }
    if let (Some(&t), Some(&l)) = (st.times.last(), st.mean_l.last()) {
        println!("t = {t}: <L> = {l:.6e} over {} trajectories", tc.ensemble_size);
    }
    finish(art, &tc, Some(s.seed))
}

#[derive(Args, Debug)]
pub struct DistributionArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Time at which to evaluate (defaults to --t-final).
    #[arg(long)]
    t: Option<f64>,
    /// Histogram bins for log10 L.
    #[arg(long, default_value_t = 4000)]
    bins: usize,
    /// Points for the record density.
    #[arg(long, default_value_t = 2001)]
    record_points: usize,
}

pub fn distribution(a: DistributionArgs, cfg: Option<&Path>) -> CliResult {
    let s = curve_settings(a.run, cfg)?;
    let t = a.t.unwrap_or(s.t_final);
    if !(t > 0.0) || a.bins < 10 || a.record_points < 2 {
        return Err(CliError::Validation("need t > 0, bins >= 10 and record-points >= 2".into()));
    }
    let sol = CommutingSolution::new(s.dim, s.gamma)?;
    let dist = sol.log_impurity_distribution(
        t,
        &LogGridSpec {
            bins: a.bins,
            ..Default::default()
        },
    )?;
    let mut table = Table::new(&["log10_L[1]", "density[1/decade]", "mass[1]"]);
    for ((c, d), m) in dist.centers().iter().zip(dist.density()).zip(&dist.mass) {
        table.push(&[*c, d, *m]);
    }
    let j = sol.j();
    let span = j + 1.0;
    let mut rec = Table::new(&["V[1]", "P_V[1]", "log10_kernel[1]"]);
    for k in 0..a.record_points {
        let v = -span + 2.0 * span * k as f64 / (a.record_points - 1) as f64;
        rec.push(&[v, sol.record_density(v, t), sol.log_kernel(v, t) / std::f64::consts::LN_10]);
    }
    let mut bounds = serde_json::Map::new();
    for kind in [BoundKind::Upper, BoundKind::PseudoLower, BoundKind::PhysicalLikely] {
        if let Ok(b) = sol.trajectory_bound(kind, t) {
            bounds.insert(format!("{kind:?}"), json!(b.log10()));
        }
    }
    let mean = sol.mean_impurity(t)?;
    let summary = json!({
        "dim": s.dim,
        "gamma": s.gamma,
        "t": t,
        "log10_mean_L": mean.log10(),
        "mean_log10_L": sol.mean_log_impurity(t)?,
        "histogram_mean_log10_L": dist.mean(),
        "quantile_1_over_D": dist.quantile(1.0 / s.dim as f64),
        "total_mass": dist.total_mass(),
        "region_mass": dist.region_mass,
        "log10_bounds": bounds,
        "central_fwhm": sol.peak_fwhm(if s.dim % 2 == 1 { 0.0 } else { 0.5 }, t).ok(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?);
    let mut art = Artifacts::new(&s.out, "distribution")?;
    art.csv("log_impurity_distribution.csv", &table)?;
    art.csv("record_density.csv", &rec)?;
    art.json("distribution.json", &summary)?;
    finish(art, json!({ "settings": s, "t": t, "bins": a.bins }), None)
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    run: RunArgs,
}

pub fn bounds(a: BoundsArgs, cfg: Option<&Path>) -> CliResult {
    let s = Settings::resolve(a.run, cfg, Settings::default())?;
    let mut report = serde_json::Map::new();
    let mut table = Table::new(&["quantity[name]", "dim[1]", "S[1]"]);
    let d = s.effective_dim();
    let b = feedback::speedup_bounds(d)?;
    for (name, v) in [
        ("lower", Some(b.lower)),
        ("upper_qft", Some(b.upper_qft)),
        ("upper_all", Some(b.upper_all)),
        ("worst_qft", b.worst_qft),
        ("global_upper", Some(b.global_upper)),
    ] {
        if let Some(v) = v {
            table.push_labeled(&[name], &[d as f64, v]);
        }
    }
    report.insert("qudit".into(), serde_json::to_value(&b).map_err(std::io::Error::other)?);
    if let Some(n) = s.qubits {
        let (lo, hi) = feedback::register_bounds(n);
        let xm = feedback::register_xmax(n)?;
        table.push_labeled(&["register_lower"], &[d as f64, lo]);
        table.push_labeled(&["register_upper"], &[d as f64, hi]);
        table.push_labeled(&["register_xmax"], &[d as f64, xm.s]);
        report.insert(
            "register".into(),
            json!({ "qubits": n, "lower": lo, "upper": hi, "xmax": xm }),
        );
    }
    if d == 4 {
        let w = feedback::mub_weights_d4(1)?;
        report.insert("mub_binary".into(), json!(feedback::binary_rate(&w)));
    }
    let report = serde_json::Value::Object(report);
    println!("{}", serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?);
    let mut art = Artifacts::new(&s.out, "bounds")?;
    art.csv("bounds.csv", &table)?;
    art.json("bounds.json", &report)?;
    finish(art, &s, None)
}

#[derive(Args, Debug)]
pub struct SpeedupArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Smallest dimension of the flow table.
    #[arg(long, default_value_t = 3)]
    dim_min: usize,
    /// Largest dimension of the flow table (defaults to --dim).
    #[arg(long)]
    dim_max: Option<usize>,
    /// Also estimate the speed-up from an ensemble at --dim.
    #[arg(long)]
    simulate: bool,
    /// Integrate simulated trajectories with the linear equation.
    #[arg(long)]
    linear: bool,
}

pub fn speedup(a: SpeedupArgs, cfg: Option<&Path>) -> CliResult {
    let s = Settings::resolve(
        a.run,
        cfg,
        Settings {
            dt: 1e-3,
            t_final: 4.0,
            ..Default::default()
        },
    )?;
    let dim_max = a.dim_max.unwrap_or(s.dim).max(a.dim_min);
    if a.dim_min < 2 || dim_max > 32 {
        return Err(CliError::Validation("flow dimensions must lie in 2..=32".into()));
    }
    let mut per = Table::new(&["dim[1]", "target_L[1]", "t_commute[1/gamma]", "t_complementary[1/gamma]", "S[1]"]);
    let mut summary = Table::new(&["dim[1]", "S_asymptote[1]", "S_lower[1]", "S_upper_qft[1]", "S_upper_all[1]"]);
    let mut ds = Vec::new();
    let mut ss = Vec::new();
    for d in a.dim_min..=dim_max {
        let curve = feedback::qft_speedup_flow(d, s.gamma, &feedback::DEFAULT_TARGETS)?;
        for t in &curve.per_target {
            per.push(&[d as f64, t.target, t.t_commute, t.t_complementary, t.s]);
        }
        let b = feedback::speedup_bounds(d)?;
        summary.push(&[d as f64, curve.asymptote, b.lower, b.upper_qft, b.upper_all]);
        ds.push(d as f64);
        ss.push(curve.asymptote);
    }
    let mut report = json!({
        "dims": ds,
        "asymptotic_S": ss,
        "quadratic_coefficient": if ds.len() >= 2 { Some(feedback::quadratic_only_fit(&ds, &ss)) } else { None },
    });
    let mut art = Artifacts::new(&s.out, "speedup")?;
    if a.simulate {
        let tc = trajectory_config(&s, s.dt.max(1e-3), a.linear, "exponential", false)?;
        let st = run_ensemble(&tc)?;
        let curve = feedback::asymptotic_speedup_simulation(tc.dim, s.gamma, &st.times, &st.mean_l, &feedback::DEFAULT_TARGETS)?;
        art.csv("speedup_simulation_ensemble.csv", &ensemble_table(&st))?;
        report["simulation"] = serde_json::to_value(&curve).map_err(std::io::Error::other)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?);
    art.csv("speedup_flow.csv", &per)?;
    art.csv("speedup_summary.csv", &summary)?;
    art.json("speedup.json", &report)?;
    finish(art, json!({ "settings": s, "dim_min": a.dim_min, "dim_max": dim_max }), Some(s.seed))
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated dimensions (defaults to --dim).
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 24)]
    restarts: usize,
    /// Ascent iterations per restart.
    #[arg(long, default_value_t = 400)]
    budget: usize,
}

pub fn search(a: SearchArgs, cfg: Option<&Path>) -> CliResult {
    let s = Settings::resolve(
        a.run,
        cfg,
        Settings {
            seed: 2024,
            ..Default::default()
        },
    )?;
    let dims = if a.dims.is_empty() { vec![s.dim] } else { a.dims.clone() };
    let mut table = Table::new(&["dim[1]", "S_best[1]", "S_lower[1]", "S_upper_all[1]", "S_qft[1]", "restarts_converged[1]"]);
    let mut results = Vec::new();
    for &d in &dims {
        let mut c = SearchConfig::new(d);
        c.restarts = a.restarts;
        c.budget = a.budget;
        c.seed = s.seed;
        let r = basis_search::search(&c)?;
        let b = feedback::speedup_bounds(d)?;
        table.push(&[d as f64, r.s_best, b.lower, b.upper_all, b.upper_qft, r.restarts_converged as f64]);
        println!("D = {d}: S = {:.6} (D^2/2 = {}, lower {:.4})", r.s_best, b.upper_all, b.lower);
        results.push(r);
    }
    let mut art = Artifacts::new(&s.out, "search")?;
    art.csv("search.csv", &table)?;
    art.json("search.json", &results)?;
    finish(art, json!({ "settings": s, "dims": dims, "restarts": a.restarts, "budget": a.budget }), Some(s.seed))
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Largest register in the bounds table.
    #[arg(long, default_value_t = 6)]
    max_qubits: usize,
    /// Simulate the register at --qubits (default 2).
    #[arg(long)]
    simulate: bool,
}

pub fn register(a: RegisterArgs, cfg: Option<&Path>) -> CliResult {
    let s = Settings::resolve(
        a.run,
        cfg,
        Settings {
            qubits: Some(2),
            dt: 1e-3,
            t_final: 1.5,
            ensemble: 400,
            protocol: "register".into(),
            ..Default::default()
        },
    )?;
    if !(1..=8).contains(&a.max_qubits) {
        return Err(CliError::Validation("--max-qubits must lie in 1..=8".into()));
    }
    let mut table = Table::new(&["qubits[1]", "dim[1]", "S_lower[1]", "S_upper[1]", "S_xmax[1]", "xmax_row[index]", "xmax_col[index]"]);
    for n in 1..=a.max_qubits {
        let (lo, hi) = feedback::register_bounds(n);
        let xm = feedback::register_xmax(n)?;
        let (r, c) = xm.location.unwrap_or((0, 0));
        table.push(&[n as f64, (1u64 << n) as f64, lo, hi, xm.s, r as f64, c as f64]);
    }
    let mut art = Artifacts::new(&s.out, "register")?;
    art.csv("register_bounds.csv", &table)?;
    if a.simulate {
        let n = s.qubits.unwrap_or(2);
        let tc = trajectory_config(&s, 0.01, true, "exponential", false)?;
        let st = run_ensemble(&tc)?;
        let (lo, hi) = feedback::register_bounds(n);
        let l0 = 1.0 - 1.0 / (1u64 << n) as f64;
        let mut t = Table::new(&[
            "t[1/kappa]",
            "mean_L[1]",
            "stderr_L[1]",
            "lower_rate_L[1]",
            "upper_rate_L[1]",
            "commuting_long_time_L[1]",
        ]);
        for k in 0..st.times.len() {
            let tt = st.times[k];
            t.push(&[
                tt,
                st.mean_l[k],
                st.stderr_l[k],
                l0 * (-4.0 * s.gamma * lo * tt).exp(),
                l0 * (-4.0 * s.gamma * hi * tt).exp(),
                if tt > 0.0 { feedback::register_commuting_long_time(n, s.gamma, tt) } else { f64::NAN },
            ]);
        }
        art.csv("register_simulation.csv", &t)?;
    }
    finish(art, json!({ "settings": s, "max_qubits": a.max_qubits, "simulate": a.simulate }), Some(s.seed))
}

#[derive(Args, Debug)]
pub struct WignerArgs {
    #[command(flatten)]
    run: RunArgs,
    /// mixed | phase:R | qft:C | mub:I:K | basis:K | pair:A:B (equal mixture of
    /// QFT columns after the optimal arrangement).
    #[arg(long, default_value = "phase:0")]
    state: String,
    /// Grid cells per axis.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
}

fn parse_index(part: Option<&str>, spec: &str) -> Result<usize, CliError> {
    part.and_then(|p| p.parse().ok())
        .ok_or_else(|| CliError::Validation(format!("bad state spec {spec:?}")))
}

fn column_state(m: &CMat, col: usize) -> Result<QuditState, CliError> {
    if col >= m.ncols() {
        return Err(CliError::Validation(format!("column {col} out of range")));
    }
    let psi = m.column(col).into_owned();
    Ok(QuditState::pure(&psi)?)
}

fn build_state(spec: &str, dim: usize) -> Result<QuditState, CliError> {
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or("");
    Ok(match head {
        "mixed" => QuditState::maximally_mixed(dim)?,
        "phase" => {
            let r = parse_index(parts.next(), spec)?;
            if r >= dim {
                return Err(CliError::Validation(format!("phase index {r} >= D")));
            }
            wigner::phase_state(dim, r)?
        }
        "qft" => column_state(qcore::qft_matrix(dim)?.matrix(), parse_index(parts.next(), spec)?)?,
        "basis" => column_state(&CMat::identity(dim, dim), parse_index(parts.next(), spec)?)?,
        "mub" => {
            if dim != 4 {
                return Err(CliError::Validation("MUB states need --dim 4".into()));
            }
            let i = parse_index(parts.next(), spec)?;
            let k = parse_index(parts.next(), spec)?;
            column_state(qcore::mub_basis_d4(i)?.matrix(), k)?
        }
        "pair" => {
            let a = parse_index(parts.next(), spec)?;
            let b = parse_index(parts.next(), spec)?;
            let t = qcore::qft_matrix(dim)?;
            let sa = column_state(t.matrix(), a)?;
            let sb = column_state(t.matrix(), b)?;
            let m = (sa.matrix() + sb.matrix()) * C64::new(0.5, 0.0);
            QuditState::new(m)?
        }
        _ => return Err(CliError::Validation(format!("unknown state spec {spec:?}"))),
    })
}

pub fn wigner(a: WignerArgs, cfg: Option<&Path>) -> CliResult {
    let s = Settings::resolve(a.run, cfg, Settings::default())?;
    let rho = build_state(&a.state, s.dim)?;
    let g = wigner::wigner_grid(&rho, a.resolution)?;
    let mut table = Table::new(&["phi[rad]", "z[1]", "W[1]"]);
    for (iz, row) in g.values.iter().enumerate() {
        for (ip, w) in row.iter().enumerate() {
            table.push(&[g.phi[ip], g.z[iz], *w]);
        }
    }
    let (pphi, pz, pw) = g.peak();
    let meta = json!({
        "dim": g.dim,
        "state": a.state,
        "convention_constant": g.convention,
        "resolution": { "z": g.z.len(), "phi": g.phi.len() },
        "integral": g.integral(),
        "min": g.min(),
        "peak": { "phi": pphi, "z": pz, "value": pw },
        "max_imaginary": g.max_imaginary,
    });
    let mut art = Artifacts::new(&s.out, "wigner")?;
    art.csv("wigner.csv", &table)?;
    art.json("wigner.json", &meta)?;
    finish(art, json!({ "settings": s, "state": a.state, "resolution": a.resolution }), None)
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Quick suite (the default).
    #[arg(long, conflicts_with = "full")]
    fast: bool,
    /// Larger ensembles and more restarts.
    #[arg(long)]
    full: bool,
    /// JSON file with five 4x4 matrices (rows of [re, im]) replacing the
    /// built-in D = 4 MUBs.
    #[arg(long)]
    mub_file: Option<PathBuf>,
    /// Run only these criteria (comma-separated numbers).
    #[arg(long, value_delimiter = ',')]
    only: Vec<u32>,
    /// Output directory for report.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_mubs(path: &Path) -> Result<Vec<CMat>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<Vec<Vec<[f64; 2]>>> =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("bad MUB file: {e}")))?;
    if raw.len() != 5 {
        return Err(CliError::Validation(format!("MUB file needs 5 matrices, found {}", raw.len())));
    }
    raw.iter()
        .map(|m| {
            if m.len() != 4 || m.iter().any(|r| r.len() != 4) {
                return Err(CliError::Validation("MUB matrices must be 4x4".into()));
            }
            Ok(CMat::from_fn(4, 4, |r, c| C64::new(m[r][c][0], m[r][c][1])))
        })
        .collect()
}

pub fn verify(a: VerifyArgs, _cfg: Option<&Path>) -> CliResult {
    let suite = if a.full { Suite::Full } else { Suite::Fast };
    let mubs = a.mub_file.as_deref().map(load_mubs).transpose()?;
    if let Some(&k) = a.only.iter().find(|&&k| !(1..=14).contains(&k)) {
        return Err(CliError::Validation(format!("no criterion {k}")));
    }
    let results = checks::run_criteria(suite, mubs.as_deref(), &a.only);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let report = json!({
        "suite": suite,
        "passed": results.len() - failed,
        "failed": failed,
        "checks": results,
    });
    let mut art = Artifacts::new(&a.out, "verify")?;
    art.json("report.json", &report)?;
    finish(art, json!({ "suite": suite, "mub_file": a.mub_file, "only": a.only }), None)?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_specs() {
        assert!((build_state("mixed", 3).unwrap().purity() - 1.0 / 3.0).abs() < 1e-14);
        assert!((build_state("phase:2", 5).unwrap().purity() - 1.0).abs() < 1e-12);
        assert!((build_state("pair:0:1", 4).unwrap().purity() - 0.5).abs() < 1e-12);
        assert!(build_state("mub:1:0", 3).is_err());
        assert!(build_state("phase:9", 5).is_err());
        assert!(build_state("bogus", 5).is_err());
    }

    #[test]
    fn grid_times() {
        assert_eq!(time_grid(Some(2.0), 4.0, 10).unwrap(), vec![2.0]);
        let g = time_grid(None, 4.0, 4).unwrap();
        assert_eq!(g, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(time_grid(Some(-1.0), 4.0, 4).is_err());
    }
}
