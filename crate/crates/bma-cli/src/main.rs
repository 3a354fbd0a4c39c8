//! `bma` command line: covariance matrices, path simulation, grid-level
//! conditional-support diagnostics, the dyadic counterexample pipeline,
//! Volterra deconvolution, and tube probabilities — reproducible artifacts
//! from a single TOML configuration.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "bma",
    version,
    about = "Gaussian moving-average process toolkit",
    after_help = "Exit status: 0 success, 2 validation error, 3 numerical failure.\n\
                  Environment: BMA_OUTPUT_DIR overrides the output directory,\n\
                  BMA_THREADS caps the worker thread count."
)]
struct Cli {
    /// TOML configuration file; omitted fields use documented defaults.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Covariance matrix of the configured process on the configured grid
    /// (gram.csv + gram.meta.json).
    Gram,
    /// Path ensemble by the configured method (paths.csv + paths.meta.json).
    Simulate,
    /// Conditional increment variances, verdict, degenerate-functional scan
    /// (cfs_report.json).
    CheckCfs,
    /// Full counterexample pipeline over a resolution ladder
    /// (counterexample.json + counterexample.csv).
    Counterexample,
    /// Regularized Volterra deconvolution over the lambda ladder
    /// (deconv.json + deconv_g.csv).
    Deconvolve,
    /// Monte Carlo tube probabilities with confidence intervals (tube.json).
    Tube,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::load_config(cli.config.as_deref())?;
    if let Ok(dir) = std::env::var("BMA_OUTPUT_DIR") {
        cfg.output_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.out_dir {
        cfg.output_dir = dir;
    }
    match cli.command {
        Command::Gram => commands::cmd_gram(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::CheckCfs => commands::cmd_check_cfs(&cfg),
        Command::Counterexample => commands::cmd_counterexample(&cfg),
        Command::Deconvolve => commands::cmd_deconvolve(&cfg),
        Command::Tube => commands::cmd_tube(&cfg),
    }
}

fn main() {
    if let Ok(threads) = std::env::var("BMA_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n > 0 {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
