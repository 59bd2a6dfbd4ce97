//! Shared run settings: command-line flags over a TOML file over defaults.

use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::CliError;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunArgs {
    /// Qudit dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Register size n (D = 2^n).
    #[arg(long)]
    pub qubits: Option<usize>,
    /// Measurement rate (per qubit for registers).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Integration step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time between feedback unitaries.
    #[arg(long = "fb-interval")]
    #[serde(alias = "fb_interval")]
    pub fb_interval: Option<f64>,
    /// Final time.
    #[arg(long = "t-final")]
    #[serde(alias = "t_final")]
    pub t_final: Option<f64>,
    /// Number of trajectories.
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// commuting, qft, worst, mub1..mub4, register, register-random.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn load_toml(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("bad config {}: {e}", path.display())))
    }

    /// Fill every unset field from `lower`.
    pub fn over(self, lower: RunArgs) -> RunArgs {
        RunArgs {
            dim: self.dim.or(lower.dim),
            qubits: self.qubits.or(lower.qubits),
            gamma: self.gamma.or(lower.gamma),
            dt: self.dt.or(lower.dt),
            fb_interval: self.fb_interval.or(lower.fb_interval),
            t_final: self.t_final.or(lower.t_final),
            ensemble: self.ensemble.or(lower.ensemble),
            seed: self.seed.or(lower.seed),
            protocol: self.protocol.or(lower.protocol),
            out: self.out.or(lower.out),
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub dim: usize,
    pub qubits: Option<usize>,
    pub gamma: f64,
    pub dt: f64,
    pub fb_interval: f64,
    pub t_final: f64,
    pub ensemble: usize,
    pub seed: u64,
    pub protocol: String,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            dim: 3,
            qubits: None,
            gamma: 1.0,
            dt: 1e-4,
            fb_interval: 1e-3,
            t_final: 2.0,
            ensemble: 100,
            seed: 1,
            protocol: "qft".into(),
            out: PathBuf::from("out"),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Validation(format!("--{name} must be positive and finite, got {x}")))
    }
}

impl Settings {
    pub fn resolve(flags: RunArgs, file: Option<&Path>, base: Settings) -> Result<Self, CliError> {
        let merged = match file {
            Some(p) => flags.over(RunArgs::load_toml(p)?),
            None => flags,
        };
        let s = Settings {
            dim: merged.dim.unwrap_or(base.dim),
            qubits: merged.qubits.or(base.qubits),
            gamma: merged.gamma.unwrap_or(base.gamma),
            dt: merged.dt.unwrap_or(base.dt),
            fb_interval: merged.fb_interval.unwrap_or(base.fb_interval),
            t_final: merged.t_final.unwrap_or(base.t_final),
            ensemble: merged.ensemble.unwrap_or(base.ensemble),
            seed: merged.seed.unwrap_or(base.seed),
            protocol: merged.protocol.unwrap_or(base.protocol),
            out: merged.out.unwrap_or(base.out),
        };
        positive("gamma", s.gamma)?;
        positive("dt", s.dt)?;
        positive("t-final", s.t_final)?;
        if s.fb_interval < 0.0 || !s.fb_interval.is_finite() {
            return Err(CliError::Validation(format!("--fb-interval must be non-negative, got {}", s.fb_interval)));
        }
        if s.dim < 2 {
            return Err(CliError::Validation(format!("--dim must be at least 2, got {}", s.dim)));
        }
        if let Some(n) = s.qubits {
            if !(1..=8).contains(&n) {
                return Err(CliError::Validation(format!("--qubits must be in 1..=8, got {n}")));
            }
        }
        if s.ensemble == 0 {
            return Err(CliError::Validation("--ensemble must be positive".into()));
        }
        Ok(s)
    }

    pub fn effective_dim(&self) -> usize {
        self.qubits.map(|n| 1 << n).unwrap_or(self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "dim = 5\ngamma = 2.0\nt-final = 3.0\n").unwrap();
        let flags = RunArgs {
            dim: Some(7),
            ..Default::default()
        };
        let s = Settings::resolve(flags, Some(&p), Settings::default()).unwrap();
        assert_eq!(s.dim, 7);
        assert_eq!(s.gamma, 2.0);
        assert_eq!(s.t_final, 3.0);
        assert_eq!(s.dt, 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "dimension = 5\n").unwrap();
        assert!(Settings::resolve(RunArgs::default(), Some(&p), Settings::default()).is_err());
    }

    #[test]
    fn rejects_non_positive_step() {
        let flags = RunArgs {
            dt: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(
            Settings::resolve(flags, None, Settings::default()),
            Err(CliError::Validation(_))
        ));
    }
}
