//! Command-line front end for CATE transfer learning.
//!
//! Subcommands:
//! - `simulate` runs seeded parameter sweeps of the synthetic study and
//!   writes a long-format results CSV.
//! - `fit` estimates a CATE model from labeled source and unlabeled target
//!   CSVs and writes a self-contained model file plus a fit report.
//! - `predict` applies a model file to new covariates.
//! - `diagnose` reports covariate-overlap diagnostics and, given a labeled
//!   target sample, efficient-score validation of fitted models.
//!
//! Exit codes: 0 success, 2 input error, 3 data-degeneracy error,
//! 4 numerical failure.

mod commands;
mod config;
mod errors;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::errors::CliResult;

#[derive(Parser)]
#[command(name = "coke", version, about = "Transfer learning of treatment effects with kernel ridge regression")]
struct Cli {
    /// Seed for data splits (fit) or the experiment stream (simulate).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Size of the worker thread pool; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation sweep and write a results CSV.
    Simulate {
        /// Sweep configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a CATE model from source and target CSV files.
    Fit {
        /// Labeled source data with header z1..zp,a,y.
        source: PathBuf,
        /// Unlabeled target covariates with header z1..zp.
        target: PathBuf,
        /// Configuration file (kernel and grid settings).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Estimator: coke, sr, dr, acw, optionally with a _cf suffix.
        #[arg(long, default_value = "coke")]
        method: String,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Report file to write (default: <out>.report.txt).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply a fitted model file to covariates.
    Predict {
        /// Covariates with header z1..zp.
        covariates: PathBuf,
        /// Model file produced by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Output CSV of predictions.
        #[arg(long)]
        out: PathBuf,
    },
    /// Covariate-overlap diagnostics and efficient-score validation.
    Diagnose {
        /// Source covariates (z1..zp, or z1..zp,a,y).
        source: PathBuf,
        /// Target covariates (z1..zp, or z1..zp,a,y).
        target: PathBuf,
        /// Labeled target sample (z1..zp,a,y) for efficient scores.
        #[arg(long)]
        labeled_target: Option<PathBuf>,
        /// Model files to validate against the efficient scores.
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Output CSV of per-row log10 density ratios.
        #[arg(long)]
        out: PathBuf,
        /// Summary CSV (sample sizes, effective sample size, ratio means).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Efficient-score CSV (requires --labeled-target).
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Correlation table CSV (requires --labeled-target and --model).
        #[arg(long)]
        correlations: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| errors::CliError::input(format!("cannot size thread pool: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, &out, cli.seed),
        Command::Fit {
            source,
            target,
            config,
            method,
            out,
            report,
        } => commands::fit(&source, &target, config.as_deref(), &method, &out, report.as_deref(), seed)
            .map(|_| 0),
        Command::Predict {
            covariates,
            model,
            out,
        } => commands::predict(&covariates, &model, &out).map(|_| 0),
        Command::Diagnose {
            source,
            target,
            labeled_target,
            model,
            out,
            summary,
            scores,
            correlations,
        } => commands::diagnose(
            &source,
            &target,
            labeled_target.as_deref(),
            &model,
            &out,
            summary.as_deref(),
            scores.as_deref(),
            correlations.as_deref(),
        )
        .map(|_| 0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
