//! `gpforest` — train, apply and evaluate forest-attribute models.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "gpforest",
    version,
    about = "Multi-output GP regression of species-specific forest attributes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Input dataset (CSV).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file (input for `predict`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated methods: gpr, knn, bayes.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset against the canonical schema.
    Validate(CommonArgs),
    /// Fit a model and write it with a metadata sidecar.
    Train(CommonArgs),
    /// Apply a model to a predictor table.
    Predict(CommonArgs),
    /// Leave-one-out cross-validation.
    Loocv(CommonArgs),
    /// Repeated random training sets of increasing size.
    SizeExperiment(CommonArgs),
    /// Write a seeded synthetic dataset.
    Synth(CommonArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    type Handler = fn(&CommonArgs) -> Result<(), Failure>;
    let (args, run): (&CommonArgs, Handler) = match &cli.command {
        Command::Validate(a) => (a, commands::validate),
        Command::Train(a) => (a, commands::train),
        Command::Predict(a) => (a, commands::predict),
        Command::Loocv(a) => (a, commands::loocv),
        Command::SizeExperiment(a) => (a, commands::size_experiment),
        Command::Synth(a) => (a, commands::synth),
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
