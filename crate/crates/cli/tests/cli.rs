use std::path::Path;
use std::process::{Command, Output};

use qpurify::qcore::mub_bases_d4;

fn qpurify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpurify"))
        .args(args)
        .env_remove("QP_THREADS")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["path"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn bounds_for_qutrit_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpurify(&["bounds", "--dim", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lower = json["qudit"]["lower"].as_f64().unwrap();
    let upper = json["qudit"]["upper_qft"].as_f64().unwrap();
    assert!((lower - 8.0 / 3.0).abs() < 1e-14);
    assert!((upper - 8.0 / 3.0).abs() < 1e-14);
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "quantity[name],dim[1],S[1]");
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, threads: &str| {
        let out = qpurify(&[
            "simulate",
            "--dim",
            "3",
            "--protocol",
            "qft",
            "--seed",
            "7",
            "--ensemble",
            "8",
            "--t-final",
            "0.5",
            "--dt",
            "1e-3",
            "--threads",
            threads,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(a.path(), "1");
    run(b.path(), "2");
    assert_eq!(hashes(a.path()), hashes(b.path()));
    assert_eq!(manifest(a.path())["master_seed"], 7);
}

#[test]
fn manifest_config_replays() {
    let a = tempfile::tempdir().unwrap();
    let out = qpurify(&[
        "simulate", "--dim", "4", "--protocol", "mub2", "--seed", "3", "--ensemble", "4", "--t-final", "0.3", "--dt",
        "1e-3", "--out", a.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = &manifest(a.path())["config"];
    let toml = format!(
        "dim = {}\nprotocol = \"mub2\"\nseed = {}\nensemble = {}\nt-final = {}\ndt = {}\nfb-interval = {}\ngamma = {}\n",
        cfg["dim"], cfg["master_seed"], cfg["ensemble_size"], cfg["t_final"], cfg["dt"], cfg["feedback_interval"], cfg["gamma"]
    );
    let b = tempfile::tempdir().unwrap();
    let file = b.path().join("replay.toml");
    std::fs::write(&file, toml).unwrap();
    let out = qpurify(&["simulate", "--config", file.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(hashes(a.path()), hashes(b.path()));
}

#[test]
fn mean_impurity_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpurify(&["mean-impurity", "--dim", "5", "--t", "2.0", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("mean_impurity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t[1/gamma],mean_L[1],log10_L[1],mean_log10_L[1]");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 2.0);
    assert!((row[2] - row[1].log10()).abs() < 1e-15);
    assert!((row[3] + 2.41).abs() < 0.02);
}

#[test]
fn validation_failure_is_json_with_status_one() {
    let out = qpurify(&["simulate", "--dt=-1"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation");

    let out = qpurify(&["simulate", "--protocol", "mub7", "--dim", "4", "--dt", "1e-3", "--t-final", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_argument");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(qpurify(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(qpurify(&["bounds", "--no-such-flag"]).status.code(), Some(2));
}

fn write_mubs(path: &Path, bases: &[qpurify::qcore::CMat]) {
    let raw: Vec<Vec<Vec<[f64; 2]>>> = bases
        .iter()
        .map(|m| (0..4).map(|r| (0..4).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect())
        .collect();
    std::fs::write(path, serde_json::to_string(&raw).unwrap()).unwrap();
}

#[test]
fn tampered_mub_fails_named_check() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("mubs.json");
    let mut bases = mub_bases_d4();
    bases[2].swap_columns(1, 2);
    write_mubs(&file, &bases);
    let out = qpurify(&[
        "verify",
        "--only",
        "10",
        "--mub-file",
        file.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL C10.mub-weights"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], 1);
    assert_eq!(report["checks"][0]["id"], "C10.mub-weights");
}

#[test]
fn untouched_mub_file_passes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("mubs.json");
    write_mubs(&file, &mub_bases_d4());
    let out = qpurify(&[
        "verify",
        "--only",
        "2,7,10",
        "--mub-file",
        file.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("PASS").count(), 3);
}

#[test]
fn wigner_grid_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpurify(&[
        "wigner", "--dim", "4", "--state", "mixed", "--resolution", "32", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("wigner.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 32 * 32);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("wigner.json")).unwrap()).unwrap();
    assert!((meta["integral"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((meta["convention_constant"].as_f64().unwrap() - (1.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
}
