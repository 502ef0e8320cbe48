use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tailcast_cli::commands;
use tailcast_cli::config::RunConfig;
use tailcast_cli::error::CliError;

#[derive(Parser)]
#[command(name = "tailcast", version, about = "Multi-site peaks-over-threshold extreme-value prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Global seed (overrides the config; TAILCAST_SEED is the fallback).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shift-offset scope: estimate on pooled data (paper) or train only.
    #[arg(long, value_parser = parse_shift_scope)]
    shift_scope: Option<tailcast::preprocess::ShiftScope>,
    /// Emit the Table-2 style block (values ×10², one decimal).
    #[arg(long)]
    paper_format: bool,
    /// Dump every Monte-Carlo sample alongside the predictions.
    #[arg(long)]
    dump_mc: bool,
}

fn parse_shift_scope(s: &str) -> Result<tailcast::preprocess::ShiftScope, String> {
    match s {
        "pooled" => Ok(tailcast::preprocess::ShiftScope::Pooled),
        "train" => Ok(tailcast::preprocess::ShiftScope::Train),
        other => Err(format!("unknown shift scope {other:?} (pooled|train)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit EGP margins, select thresholds, emit density/histogram data.
    FitMarginals(Common),
    /// Train the angular-regression and MGP models on the training split.
    Train(Common),
    /// Predict the extreme test rows and report errors, QQ data, coverage.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding the trained model JSONs (default: output dir).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Predict the target for a covariate-only period.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a known ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15_000)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, u64), CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    if let Some(scope) = common.shift_scope {
        config.preprocess.shift_scope = scope;
    }
    if common.paper_format {
        config.output.paper_format = true;
    }
    if common.dump_mc {
        config.output.dump_mc = true;
    }
    let seed = config.effective_seed(common.seed);
    Ok((config, seed))
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::FitMarginals(common) => {
            let (config, seed) = load_config(&common)?;
            let outcome = commands::cmd_fit_marginals(&config, seed)?;
            println!(
                "fitted {} margins on {} training rows; outputs in {}",
                outcome.fitted.records.len(),
                outcome.pipeline.train.n_rows(),
                config.output.dir.display()
            );
        }
        Command::Train(common) => {
            let (config, seed) = load_config(&common)?;
            let outcome = commands::cmd_train(&config, seed)?;
            println!(
                "trained roxane + mgpred ({}) on {} extreme rows ({} uncensored); models in {}",
                outcome.mgp.family.name(),
                outcome.n_extreme,
                outcome.n_uncensored,
                config.output.dir.display()
            );
        }
        Command::Evaluate { common, models } => {
            let (config, seed) = load_config(&common)?;
            let models_dir = models.unwrap_or_else(|| config.output.dir.clone());
            let outcome = commands::cmd_evaluate(&config, seed, &models_dir)?;
            match (&outcome.roxane_report, &outcome.mgpred_report) {
                (Some(rox), Some(mgp)) => println!(
                    "evaluated {} extreme test rows: roxane rmse {:.4}, mgpred rmse {:.4}, coverage {:.3}",
                    outcome.n_test_extreme,
                    rox.rmse,
                    mgp.rmse,
                    mgp.coverage_95.unwrap_or(f64::NAN),
                ),
                _ => println!("no extreme test rows to evaluate"),
            }
        }
        Command::Reconstruct { common, models } => {
            let (config, seed) = load_config(&common)?;
            let models_dir = models.unwrap_or_else(|| config.output.dir.clone());
            let outcome = commands::cmd_reconstruct(&config, seed, &models_dir)?;
            println!(
                "reconstructed {} extreme rows out of {} in the window",
                outcome.n_extreme, outcome.n_input
            );
        }
        Command::Synth { out, n, seed } => {
            let seed = seed
                .or_else(|| std::env::var("TAILCAST_SEED").ok().and_then(|v| v.parse().ok()))
                .unwrap_or(0);
            let outcome = commands::cmd_synth(&out, n, seed)?;
            println!(
                "wrote {} station files and {}",
                outcome.station_paths.len(),
                outcome.config_path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
