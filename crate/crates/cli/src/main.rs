//! `copolymer`: classification, asymptotic verification and path sampling
//! for periodic copolymers at a selective interface.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::LoadedConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A check ran to completion and did not pass.
    #[error("check failed: {0}")]
    Check(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Check(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<copolymer::Error> for CliError {
    fn from(e: copolymer::Error) -> Self {
        match e {
            copolymer::Error::InvalidInput(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "copolymer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports; without it the main report goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sampling threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Overrides the configured horizon N.
    #[arg(long = "Nmax", global = true)]
    n_max: Option<usize>,
    /// Overrides the configured kernel horizon.
    #[arg(long = "Xmax", global = true)]
    x_max: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regime, order parameter, free energy and asymptotic prefactors.
    Classify,
    /// Exact partition functions against their predicted asymptotes.
    Verify,
    /// Polymer paths and their scaling statistics.
    Sample,
    /// Every constant the regime defines, sign probabilities included.
    Constants,
    /// Batch check that zero-mean copolymers localize.
    LocalizationCheck,
}

fn load(cli: &Cli) -> Result<LoadedConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut loaded = LoadedConfig::parse(&text)?;
    let c = &mut loaded.config;
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(n) = cli.n_max {
        c.horizon = n;
    }
    if let Some(x) = cli.x_max {
        c.x_max = x;
    }
    if c.horizon == 0 || c.x_max < c.horizon {
        return Err(CliError::Config(format!("need 1 ≤ Nmax ≤ Xmax, got Nmax = {}, Xmax = {}", c.horizon, c.x_max)));
    }
    if cli.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    Ok(loaded)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let loaded = load(cli)?;
    let out = output::Output::new(cli.out.clone(), &loaded)?;
    match cli.command {
        Command::Classify => commands::classify(&loaded, &out),
        Command::Verify => commands::verify(&loaded, &out),
        Command::Sample => commands::sample(&loaded, &out, cli.workers),
        Command::Constants => commands::constants(&loaded, &out),
        Command::LocalizationCheck => commands::localization_check(&loaded, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("copolymer: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
