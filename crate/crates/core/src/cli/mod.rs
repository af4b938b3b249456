//! Command-line front end: argument parsing and dispatch to the
//! subcommands. Each subcommand writes into a fresh run directory.

pub mod commands;
pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_benchmark, cmd_evaluate, cmd_simulate, cmd_train, BenchmarkResult, CellRecord, Prepared, SummaryRow,
};
pub use config::Config;
pub use run::{RunDir, RunManifest};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "annotmix",
    version,
    about = "Multi-annotator classification with triple mixing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train simulated annotators and write their (masked) labels.
    Simulate(RunArgs),
    /// Train one model and write its metric log and checkpoints.
    Train(RunArgs),
    /// Score a checkpoint on the test set.
    Evaluate(RunArgs),
    /// Run a grid of variants × seeds and summarise it.
    Benchmark(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a) | Command::Train(a) | Command::Evaluate(a) | Command::Benchmark(a) => a,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let args = cli.command.args();
    let mut cfg = Config::load(&args.config).map_err(|e| match e {
        Error::Io { path, source } => Error::Input(format!("cannot read config {}: {source}", path.display())),
        other => other,
    })?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(Error::config("--jobs", "must be positive"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(&cfg, &a.out).map(|_| ()),
        Command::Train(a) => cmd_train(&cfg, &a.out).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&cfg, &a.out).map(|_| ()),
        Command::Benchmark(a) => cmd_benchmark(&cfg, &a.out).map(|_| ()),
    })
}
