//! `hypobench`: config-driven benchmark runner.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 data error,
//! 4 numeric error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::ModelSelect;
use config::RunConfig;
use hypobench_core::Error;

#[derive(Parser)]
#[command(
    name = "hypobench",
    version,
    about = "Daily hypoxia classification benchmark: data prep, four sequence models, calibrated evaluation, pairwise significance tests"
)]
struct Cli {
    /// Path to the run configuration (TOML; see docs/formats.md).
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic hindcast CSV.
    Synth {
        /// Output CSV path (default: <output_dir>/hindcast.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Preprocess and resample into sequence datasets.
    Prepare,
    /// Train one architecture or all enabled ones.
    Train {
        /// bilstm | tcn | medformer | sttransformer | all
        #[arg(long, default_value = "all")]
        model: String,
    },
    /// Score checkpoints on every test period (reports + curves).
    Evaluate {
        #[arg(long, default_value = "all")]
        model: String,
    },
    /// Pairwise McNemar tests at each model's optimized threshold.
    Compare,
    /// Full pipeline: synth -> prepare -> train -> evaluate -> compare.
    Bench,
}

fn run(cli: Cli) -> hypobench_core::Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Synth { out } => commands::synth(&cfg, out),
        Command::Prepare => commands::prepare(&cfg),
        Command::Train { model } => {
            commands::train_cmd(&cfg, ModelSelect::parse(&model)?, cli.seed)
        }
        Command::Evaluate { model } => commands::evaluate(&cfg, ModelSelect::parse(&model)?),
        Command::Compare => commands::compare(&cfg),
        Command::Bench => commands::bench(&cfg, cli.seed),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
