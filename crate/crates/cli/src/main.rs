//! Command line for the reconstruction pipeline.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime or
//! numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pips_cli::config::ExperimentConfig;
use pips_cli::pipeline;

#[derive(Parser)]
#[command(name = "pips", about = "Prior-informed latent diffusion MRI reconstruction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration (JSON). Defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the acceleration list, e.g. "3,6,9,12".
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// Restrict reconstruction to one method.
    #[arg(long)]
    method: Option<String>,
    /// Worker pool width for reconstruction sweeps.
    #[arg(long, default_value_t = 2)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantoms, longitudinal pairs, coil maps, masks and k-space.
    Simulate(CommonArgs),
    /// Train the convolutional autoencoder on the simulated images.
    TrainAe(CommonArgs),
    /// Train the latent score model (needs the autoencoder checkpoint).
    TrainScore(CommonArgs),
    /// Run a single reconstruction job file.
    Reconstruct {
        /// Job description (JSON).
        #[arg(long)]
        job: PathBuf,
    },
    /// Score reconstructions with the patch-grouped protocol.
    Evaluate(CommonArgs),
    /// Full pipeline: simulate, train, reconstruct everything, evaluate.
    Sweep(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(r) = &args.r {
        cfg.simulate.r_values = r.clone();
    }
    if let Some(method) = &args.method {
        cfg.reconstruct.methods = vec![method.clone()];
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Errors surfaced before any numerical work are validation failures.
fn run(cli: Cli) -> Result<(), (u8, anyhow::Error)> {
    let validation = |e: anyhow::Error| (1u8, e);
    let runtime = |e: anyhow::Error| (2u8, e);
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load_config(&args).map_err(validation)?;
            pipeline::cmd_simulate(&cfg).map(|_| ()).map_err(runtime)
        }
        Command::TrainAe(args) => {
            let cfg = load_config(&args).map_err(validation)?;
            pipeline::cmd_train_ae(&cfg).map_err(runtime)
        }
        Command::TrainScore(args) => {
            let cfg = load_config(&args).map_err(validation)?;
            pipeline::cmd_train_score(&cfg).map_err(runtime)
        }
        Command::Reconstruct { job } => {
            // a malformed job file is a validation error; anything past
            // loading is runtime
            let text = std::fs::read_to_string(&job)
                .with_context(|| format!("reading {}", job.display()))
                .map_err(validation)?;
            let parsed: pipeline::JobFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", job.display()))
                .map_err(validation)?;
            pipeline::run_job(&parsed).map_err(runtime)
        }
        Command::Evaluate(args) => {
            let cfg = load_config(&args).map_err(validation)?;
            pipeline::cmd_evaluate(&cfg).map(|_| ()).map_err(runtime)
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args).map_err(validation)?;
            pipeline::cmd_sweep(&cfg, args.jobs).map(|_| ()).map_err(runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
