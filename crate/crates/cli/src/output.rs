//! CSV tables, JSON artifacts and the run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Numeric rows under a header naming each column as `name[unit]`.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row.iter().map(|&x| fmt_num(x)).collect());
    }

    /// Row whose first cells are labels.
    pub fn push_labeled(&mut self, labels: &[&str], values: &[f64]) {
        assert_eq!(labels.len() + values.len(), self.headers.len(), "row width");
        let mut r: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        r.extend(values.iter().map(|&x| fmt_num(x)));
        self.rows.push(r);
    }

    pub fn render(&self) -> String {
        let mut s = self.headers.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_seconds: f64,
}

/// Collects artifacts for one command and writes the manifest last.
pub struct Artifacts {
    dir: PathBuf,
    command: String,
    start: Instant,
    outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            start: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> std::io::Result<PathBuf> {
        self.write_bytes(name, table.render().as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    pub fn finish(self, config: serde_json::Value, seed: Option<u64>) -> std::io::Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            config,
            master_seed: seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs: self.outputs,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_num(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(fmt_num(-2.5), "-2.5000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn table_renders_header_first() {
        let mut t = Table::new(&["t[1/gamma]", "L[1]"]);
        t.push(&[0.5, 0.25]);
        let s = t.render();
        assert!(s.starts_with("t[1/gamma],L[1]\n"));
        assert_eq!(s.lines().count(), 2);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
