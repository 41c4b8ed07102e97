//! Command-line front end.
//!
//! Every command takes an optional `--config FILE` plus `key=value`
//! overrides. Exit codes: 0 success, 1 acceptance failure, 2 configuration
//! error, 3 computation error.

pub mod commands;
pub mod config;
pub mod output;
pub mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::error::Error;
pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation error: {0}")]
    Compute(#[from] Error),
    #[error("acceptance failure:\n{0}")]
    Acceptance(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Acceptance(_) => 1,
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qmspline", version, about = "Quadratic-mean errors of composite Hermite spline approximation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// key=value overrides applied after the file.
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantile knots t_i = G(i/n) as `i,t_i`.
    Knots(ConfigArgs),
    /// Pointwise error at `t`, or the norm error for a single `n`.
    Error(ConfigArgs),
    /// Norm errors over `n_list`.
    Sweep(ConfigArgs),
    /// Log-log rate fit of a sweep (from `input` or computed).
    Fit(ConfigArgs),
    /// Remainder constant b for (m, beta, k, p).
    Bconst(ConfigArgs),
    /// Optimal density of the model's local stationarity function.
    OptimalDensity(ConfigArgs),
    /// Admissibility of a power density.
    CheckConditions(ConfigArgs),
    /// Greedy design attaining the rate n^-kappa.
    IntermediateDesign(ConfigArgs),
    /// Full pipeline of a built-in example (4 or 5).
    Reproduce {
        example: u8,
        #[command(flatten)]
        args: ConfigArgs,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let (args, example) = match &cli.command {
        Command::Knots(a)
        | Command::Error(a)
        | Command::Sweep(a)
        | Command::Fit(a)
        | Command::Bconst(a)
        | Command::OptimalDensity(a)
        | Command::CheckConditions(a)
        | Command::IntermediateDesign(a) => (a, None),
        Command::Reproduce { example, args } => (args, Some(*example)),
    };
    let cfg = ExperimentConfig::load(args.config.as_deref(), &args.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    pool.install(|| {
        let text = match &cli.command {
            Command::Knots(_) => commands::knots(&cfg)?,
            Command::Error(_) => commands::error(&cfg)?,
            Command::Sweep(_) => commands::sweep(&cfg)?,
            Command::Fit(_) => commands::fit(&cfg)?,
            Command::Bconst(_) => commands::bconst(&cfg)?,
            Command::OptimalDensity(_) => commands::optimal_density(&cfg)?,
            Command::CheckConditions(_) => commands::check_conditions(&cfg)?,
            Command::IntermediateDesign(_) => commands::intermediate_design(&cfg)?,
            Command::Reproduce { .. } => {
                let report = reproduce::run(example.unwrap_or_default(), &cfg)?;
                print!("{}", report.text);
                return if report.passed() {
                    Ok(())
                } else {
                    Err(CliError::Acceptance(report.failures()))
                };
            }
        };
        output::emit(cfg.output.as_deref(), &text)
    })
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qmspline: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
