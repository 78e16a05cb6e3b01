//! Command-line driver: train steering directions on the built-in toy
//! generator, evaluate a checkpoint into a CSV/PPM report bundle, and
//! compare two report bundles.
//!
//! Exit codes: 0 success, 2 configuration or contract error, 3 numeric
//! failure (non-finite loss or gradient).

mod artifacts;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Numeric(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<latentdirs::Error> for CliError {
    fn from(e: latentdirs::Error) -> Self {
        match e {
            latentdirs::Error::NonFinite { .. } | latentdirs::Error::Numeric(_) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "latentdirs", version)]
#[command(about = "Learn and evaluate diverse latent directions that steer image scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train direction networks and write a checkpoint plus a loss log.
    Train {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the checkpoint, log, and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override [train].seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint: sweeps, slopes, tables, heatmaps, factors,
    /// Fréchet proxy, and sample image strips.
    Eval {
        /// Run configuration (TOML); generator settings must match the
        /// checkpoint.
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for the report bundle.
        #[arg(long)]
        out: PathBuf,
        /// Override [eval].test_seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for evaluation; outputs are identical for any
        /// thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare two evaluated run bundles (same scorer and test seed).
    Compare {
        #[arg(long = "run-a")]
        run_a: PathBuf,
        #[arg(long = "run-b")]
        run_b: PathBuf,
        /// Output directory for comparison.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed } => commands::cmd_train(&config, &out, seed),
        Command::Eval {
            config,
            checkpoint,
            out,
            seed,
            threads,
        } => commands::cmd_eval(&config, &checkpoint, &out, seed, threads),
        Command::Compare { run_a, run_b, out } => commands::cmd_compare(&run_a, &run_b, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
