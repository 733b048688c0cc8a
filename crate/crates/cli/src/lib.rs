//! Experiment runner behind the `delta` binary: configuration layering,
//! multi-seed orchestration, sweeps and artifact output.

pub mod commands;
pub mod config;
pub mod error;
pub mod summary;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{Runner, WORKERS_ENV};
pub use config::{ExperimentArgs, MethodArg};
pub use error::{CliError, CliResult};
pub use summary::{PointSummary, RunSummary, SeedSummary};

#[derive(Debug, Parser)]
#[command(
    name = "delta",
    version,
    about = "Long-tailed online continual learning experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate every seed of one configuration.
    Run(ExperimentArgs),
    /// Repeat the run for several imbalance ratios.
    SweepImbalance {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_values_t = commands::DEFAULT_RHOS)]
        rhos: Vec<f64>,
    },
    /// Repeat the run for several exemplar pairing counts.
    SweepPairing {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_values_t = commands::DEFAULT_PAIRINGS)]
        ms: Vec<usize>,
    },
    /// Cross-entropy against equalization in the classifier stage.
    CompareLosses(ExperimentArgs),
    /// Print the class histogram of a replay buffer.
    InspectBuffer {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Read a saved `label,features...` snapshot instead of running.
        #[arg(long, value_name = "FILE")]
        snapshot: Option<PathBuf>,
    },
}

/// Runs a parsed command line; stdout gets a short human-readable report.
pub fn execute(cli: Cli) -> CliResult<()> {
    let report = |summary: &RunSummary| {
        for p in &summary.points {
            let a = p.average_accuracy;
            println!(
                "{}: A_T = {:.4} ± {:.4} over {} seeds",
                p.label, a.mean, a.std, a.n
            );
        }
    };
    match cli.command {
        Command::Run(args) => {
            let spec = args.resolve()?;
            report(&commands::run(&spec, &args.out, &Runner::from_env()?)?);
        }
        Command::SweepImbalance { args, rhos } => {
            let spec = args.resolve()?;
            report(&commands::sweep_imbalance(
                &spec,
                &rhos,
                &args.out,
                &Runner::from_env()?,
            )?);
        }
        Command::SweepPairing { args, ms } => {
            let spec = args.resolve()?;
            report(&commands::sweep_pairing(
                &spec,
                &ms,
                &args.out,
                &Runner::from_env()?,
            )?);
        }
        Command::CompareLosses(args) => {
            let spec = args.resolve()?;
            report(&commands::compare_losses(
                &spec,
                &args.out,
                &Runner::from_env()?,
            )?);
        }
        Command::InspectBuffer { args, snapshot } => {
            let spec = args.resolve()?;
            let hist = commands::inspect_buffer(&spec, snapshot.as_deref(), &args.out)?;
            print!("{}", commands::histogram_csv(&hist));
        }
    }
    Ok(())
}
