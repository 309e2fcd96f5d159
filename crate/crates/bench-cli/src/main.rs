//! Benchmark CLI for Riemannian variance-reduced stochastic optimizers:
//! seeded optimizer comparisons with IFO accounting, gradient and
//! estimation-error verification, and plot-script emission.

mod checks;
mod config;
mod plot;
mod runner;
mod trace_io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

/// Worker-count override for parallel (optimizer, seed) cells.
const WORKERS_ENV: &str = "RSPIDER_BENCH_WORKERS";

#[derive(Parser)]
#[command(name = "rspider-bench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer comparison described by a config file.
    Run {
        config: PathBuf,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override run.ifo_budget.
        #[arg(long)]
        budget: Option<u64>,
        /// Override run.out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference verification of the problem gradients.
    Gradcheck {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo check of the gradient-estimation error bound.
    VarianceCheck {
        config: PathBuf,
        /// Override [variance_check].trials.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate traces (median over seeds) and emit a plotting script.
    Plot { dir: PathBuf },
    /// List the known benchmark datasets and their shapes.
    Datasets,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            budget,
            out,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.run.seeds = vec![s];
            }
            if let Some(b) = budget {
                cfg.run.ifo_budget = Some(b);
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
            let workers = std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse::<usize>().ok());
            runner::cmd_run(&cfg, &out_dir, workers)
        }
        Command::Gradcheck { config, seed } => {
            let cfg = RunConfig::from_path(&config)?;
            checks::cmd_gradcheck(&cfg, seed)
        }
        Command::VarianceCheck {
            config,
            trials,
            seed,
        } => {
            let cfg = RunConfig::from_path(&config)?;
            checks::cmd_variance_check(&cfg, trials, seed)
        }
        Command::Plot { dir } => {
            plot::cmd_plot(&dir)?;
            Ok(true)
        }
        Command::Datasets => {
            println!(
                "{:<14} {:>8} {:>9} {:>9}",
                "name", "classes", "samples", "features"
            );
            for info in rspider_core::data::dataset_registry() {
                println!(
                    "{:<14} {:>8} {:>9} {:>9}",
                    info.name,
                    info.classes
                        .map(|c| c.to_string())
                        .unwrap_or_else(|| "-".into()),
                    info.samples,
                    info.features
                );
            }
            Ok(true)
        }
    }
}
