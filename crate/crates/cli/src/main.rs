//! `sis`: synthesize, verify and simulate safety indices from a JSON config.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit codes shared by every command.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const SAFETY: u8 = 2;
    pub const SOLVER: u8 = 3;
    pub const CONFIG: u8 = 4;
}

#[derive(Parser, Debug)]
#[command(name = "sis", version, about = "Safety index synthesis, verification and simulation")]
struct Cli {
    /// Worker threads for restarts, grid sweeps and trial batches.
    #[arg(long, global = true, env = "SIS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Run configuration (JSON). The built-in unicycle setup when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent directory for run artifacts.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Overrides the solver, falsifier and simulation seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the certificate eigenvalue tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct IndexSource {
    /// Certificate file; defaults to `certificate.json` in the run directory.
    #[arg(long, conflicts_with = "k")]
    pub certificate: Option<PathBuf>,
    /// Use these gains directly, bypassing any certificate.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub k: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a certificate and write it to the run directory.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Re-check a certificate and sweep the state space for counterexamples.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: IndexSource,
    },
    /// Run the closed-loop navigation batch.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: IndexSource,
        #[arg(long)]
        trials: Option<usize>,
        /// Write one trajectory CSV per trial.
        #[arg(long)]
        trajectories: bool,
    },
    /// Collect the artifacts of a run directory into `report.md`.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let code = match cli.command {
        Command::Synth { common } => commands::synth(&common),
        Command::Verify { common, source } => commands::verify(&common, &source),
        Command::Simulate {
            common,
            source,
            trials,
            trajectories,
        } => commands::simulate(&common, &source, trials, trajectories),
        Command::Report { common } => commands::report(&common),
    };
    ExitCode::from(code)
}
