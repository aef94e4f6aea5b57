//! `fedchan` — federated generative channel-modeling experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::TrainMode;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "fedchan",
    about = "Synthetic air-to-ground channel datasets, per-city link classifiers, \
             conditional VAE/GAN path models (standalone or federated), and \
             distribution-distance evaluation",
    version
)]
struct Cli {
    /// Experiment config file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Experiment seed; drives every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for datasets, models, and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the full-size per-city datasets (36k/25.8k/23k links).
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate per-city synthetic datasets (CSV plus .meta sidecar).
    GenData,
    /// Train and save one link-state classifier per city.
    TrainLink,
    /// Train a path model: standalone needs --city, fl-* trains all cities.
    Train {
        #[arg(long, value_enum)]
        mode: TrainMode,
        #[arg(long)]
        city: Option<String>,
    },
    /// Evaluate every trained (city, method) pair on held-out data.
    Eval,
    /// Merge metrics and history into an annotated summary table.
    Report,
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = ExperimentConfig::load(
        cli.config.as_deref(),
        cli.seed,
        cli.out.clone(),
        cli.paper_scale,
    )?;
    match cli.command {
        Command::GenData => commands::cmd_gen_data(&cfg),
        Command::TrainLink => commands::cmd_train_link(&cfg),
        Command::Train { mode, city } => commands::cmd_train(&cfg, mode, city),
        Command::Eval => commands::cmd_eval(&cfg),
        Command::Report => commands::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Single-line, machine-parsable failure report.
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
