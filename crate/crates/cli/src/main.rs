//! `qscreen`: preprocess data, filter a circuit corpus, screen the survivors
//! and fully train the winner.
//!
//! Exit codes: 0 on success, 1 on configuration or data errors, 2 on internal
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qscreen::config::RunConfig;
use qscreen::pipeline::{Pipeline, PipelineError};

#[derive(Parser)]
#[command(name = "qscreen", version, about = "Quantum circuit screening for hybrid fraud classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to omitted fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for filtering and screening
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Remove the residual skip connection (z_res = z_quantum)
    #[arg(long, global = true)]
    no_skip: bool,
    /// Split before SMOTE and scaling
    #[arg(long, global = true)]
    split_first: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load, balance, scale and split the dataset
    Preprocess,
    /// Filter the circuit corpus and write filter_report.json
    Filter,
    /// Short-train every accepted circuit
    Screen,
    /// Fully train the selected circuit and evaluate it on the test split
    Train {
        /// Train this circuit instead of the screening winner
        #[arg(long)]
        circuit: Option<String>,
    },
    /// preprocess, filter, screen and train in sequence
    RunAll,
}

fn load_config(common: &Common) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    if common.no_skip {
        cfg.model.skip_enabled = false;
    }
    if common.split_first {
        cfg.data.split_first = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let pipeline = Pipeline::new(load_config(&cli.common)?)?;
    match cli.command {
        Command::Preprocess => pipeline.preprocess().map(drop),
        Command::Filter => pipeline.filter().map(drop),
        Command::Screen => pipeline.screen().map(drop),
        Command::Train { circuit } => pipeline.train(circuit.as_deref()).map(drop),
        Command::RunAll => pipeline.run_all().map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
