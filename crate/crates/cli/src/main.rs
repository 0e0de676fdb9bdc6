//! `nutrifuse`: dataset ingestion, training, evaluation and augmented
//! inference driven by one TOML configuration file.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "nutrifuse", version, about = "Ingredient-aware nutrition estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set train.config.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Validate raw records, sample video frames and write split manifests.
    Ingest,
    /// Map raw ingredient terms onto the canonical vocabulary.
    Normalize,
    /// Precompute and persist ingredient embeddings.
    EmbedCache,
    /// Generate a synthetic dataset with split manifests.
    Synth,
    /// Train a fusion model and keep the best validation checkpoint.
    Train,
    /// Score a checkpoint under one testing protocol.
    Eval,
    /// Predict nutrition for one image.
    Predict,
    /// Predict ingredients by voting over augmented client queries, then
    /// nutrition.
    VoteInfer,
    /// Fill the diet-dialogue prompt template.
    DialogueTemplate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nutrifuse: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = config::load(cli.config.as_deref(), &cli.sets, cli.seed, cli.out.as_deref())?;
    commands::dispatch(cli.command, &cfg)
}
