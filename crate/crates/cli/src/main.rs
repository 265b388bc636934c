//! `sensorfix`: generate or ingest datasets, run fault experiments, report
//! and replay them.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sensorfix", version, about = "Unsupervised feature selection and sensor self-repair experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `dotted.key=value` override; repeatable, applied in order after the
    /// config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads (0 = all cores). Takes precedence over `--set`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Base seed. Takes precedence over `--set`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (train.csv, test.csv, meta.toml).
    GenSynth,
    /// Parse gas sensor array batch files and select a classification subset.
    Ingest {
        /// Skip malformed lines instead of failing.
        #[arg(long)]
        permissive: bool,
        /// Batch files, in any order.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run a Monte Carlo experiment.
    Run,
    /// Tabulate result directories and compare them pairwise.
    Report {
        /// Significance level of the paired comparisons.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Verify a result directory and re-execute one of its runs.
    Replay {
        /// `manifest.json` or the directory holding it.
        path: PathBuf,
        #[arg(long = "run", default_value_t = 0)]
        run_index: usize,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match cli.command {
        Command::GenSynth => commands::gen_synth(g),
        Command::Ingest { permissive, files } => commands::ingest(g, &files, permissive),
        Command::Run => commands::run(g),
        Command::Report { alpha, dirs } => commands::report(g, &dirs, alpha),
        Command::Replay { path, run_index } => commands::replay(g, &path, run_index),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SENSORFIX_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::FAILURE
        }
    }
}
