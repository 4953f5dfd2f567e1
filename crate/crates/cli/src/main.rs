//! Experiment driver for the warm-standby analysis toolkit.
//!
//! Subcommands: `exact`, `simulate`, `couple`, `bounds`, `verify`. Every run
//! reads one TOML config (see the repository README for the schema) and
//! writes schema-versioned CSV files plus human-readable reports. Exit codes:
//! 0 success, 1 assertion failure, 2 usage or config error.

mod commands;
mod config;
mod csvout;

use clap::{Parser, Subcommand};
use config::{ConfigError, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum AppError {
    /// Usage or config problems; exit code 2.
    Usage(String),
    /// Failed assertions and runtime model violations; exit code 1.
    Check(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Usage(format!("io error: {e}"))
    }
}

impl From<warmstandby::bounds::BoundsError> for AppError {
    fn from(e: warmstandby::bounds::BoundsError) -> Self {
        AppError::Check(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "warmstandby",
    version,
    about = "Exact analysis, Monte Carlo simulation and certified convergence bounds \
             for a two-element repairable system with warm standby"
)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides sim.master_seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides output.dir from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact constant-rate analysis: availability curve, spectrum,
    /// stationary distribution.
    Exact {
        /// Also evaluate the transcribed closed forms and report agreement.
        #[arg(long)]
        closed_form_diagnostics: bool,
    },
    /// Monte Carlo ensemble: availability with standard errors, state
    /// probabilities, state histogram, repair-epoch statistics.
    Simulate,
    /// Coupled pairs: coupling-epoch samples and the empirical tail.
    Couple,
    /// Convergence-rate certificate (alpha, K) and the constants behind it.
    Bounds,
    /// Runs simulate + couple + bounds and asserts the certified envelope
    /// dominates every observation.
    Verify,
}

fn run(cli: Cli) -> Result<(), AppError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(AppError::Usage("--threads must be >= 1".into()));
        }
        // Ignore the error when a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let config_path = cli
        .config
        .ok_or_else(|| AppError::Usage("--config <PATH> is required".into()))?;
    let mut config = ExperimentConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        config.sim.master_seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| config.output.dir.clone());
    std::fs::create_dir_all(&out)?;

    match cli.command {
        Command::Exact {
            closed_form_diagnostics,
        } => commands::cmd_exact(&config, &out, closed_form_diagnostics),
        Command::Simulate => commands::cmd_simulate(&config, &out),
        Command::Couple => commands::cmd_couple(&config, &out),
        Command::Bounds => commands::cmd_bounds(&config, &out),
        Command::Verify => commands::cmd_verify(&config, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Check(message)) => {
            eprintln!("check failed: {message}");
            ExitCode::from(1)
        }
        Err(AppError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
