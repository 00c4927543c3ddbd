//! Pipeline orchestrator: ingest, preprocess, infer, evaluate, synth and
//! report subcommands over the canonical file formats. Every run emits a
//! machine-readable summary line to stderr; failures exit nonzero with a
//! one-line JSON error.

mod commands;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drowse_core::config::{load_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "drowse",
    version,
    about = "Sleep-period inference from WiFi AP association logs"
)]
struct Cli {
    /// Flat key-value config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config worker count.
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw AP log lines into canonical anonymized JSONL events.
    Ingest(commands::ingest::IngestArgs),
    /// Turn events into per-device, per-day slot series and manifests.
    Preprocess(commands::preprocess::PreprocessArgs),
    /// Run the ensemble detector over preprocessed slot series.
    Infer(commands::infer::InferArgs),
    /// Score estimates against ground truth.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Generate synthetic traces with known ground truth.
    Synth(commands::synth::SynthArgs),
    /// Aggregate analytics over estimates.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let config = match build_config(&cli) {
        Ok(config) => config,
        Err(err) => return fail(&err),
    };

    let result = match &cli.command {
        Command::Ingest(args) => commands::ingest::run(args, &config),
        Command::Preprocess(args) => commands::preprocess::run(args, &config),
        Command::Infer(args) => commands::infer::run(args, &config),
        Command::Evaluate(args) => commands::evaluate::run(args, &config),
        Command::Synth(args) => commands::synth::run(args, &config),
        Command::Report(args) => commands::report::run(args, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(&err),
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(parallelism) = cli.parallelism {
        config.parallelism = parallelism;
    }
    config.validate()?;
    Ok(config)
}

fn fail(err: &anyhow::Error) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": format!("{err:#}") })
    );
    ExitCode::FAILURE
}
