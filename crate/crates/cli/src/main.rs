use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;
mod error;
mod output;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "qpurify", version, about = "Rapid purification of continuously measured qudits")]
struct Cli {
    /// TOML file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to QP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact mean impurity of a commuting measurement.
    MeanImpurity(commands::CurveArgs),
    /// Two-eigenvalue approximation against the exact mean.
    TwoEig(commands::CurveArgs),
    /// Stochastic ensemble for any protocol.
    Simulate(commands::SimulateArgs),
    /// Distribution of log10 L and of the scaled record.
    Distribution(commands::DistributionArgs),
    /// Analytic speed-up bounds.
    Bounds(commands::BoundsArgs),
    /// Speed-up of the QFT protocol from the spectral flow or a simulation.
    Speedup(commands::SpeedupArgs),
    /// Search over unbiased bases for the largest speed-up.
    Search(commands::SearchArgs),
    /// Qubit-register bounds, weights and simulation.
    Register(commands::RegisterArgs),
    /// Spin Wigner function on an equal-area grid.
    Wigner(commands::WignerArgs),
    /// Run the acceptance checks.
    Verify(commands::VerifyArgs),
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("QP_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("QP_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::MeanImpurity(a) => commands::mean_impurity(a, cfg),
        Command::TwoEig(a) => commands::two_eig(a, cfg),
        Command::Simulate(a) => commands::simulate(a, cfg),
        Command::Distribution(a) => commands::distribution(a, cfg),
        Command::Bounds(a) => commands::bounds(a, cfg),
        Command::Speedup(a) => commands::speedup(a, cfg),
        Command::Search(a) => commands::search(a, cfg),
        Command::Register(a) => commands::register(a, cfg),
        Command::Wigner(a) => commands::wigner(a, cfg),
        Command::Verify(a) => commands::verify(a, cfg),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
