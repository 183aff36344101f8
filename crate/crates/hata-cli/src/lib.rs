//! Command-line front end for the allocation pipeline: build occupancy
//! stacks from track logs, tune cost weights, run experiment batches, and
//! condense raw runs into comparison tables.

use clap::{Parser, Subcommand};

pub mod batch;
pub mod build_mods;
pub mod gen;
pub mod report;
pub mod tune;

/// Errors bucketed by exit code: 1 usage, 2 bad input data, 3 runtime.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn data(err: impl Into<anyhow::Error>) -> Self {
        CliError::Data(err.into())
    }

    pub fn runtime(err: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(err.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (kind, err) = match self {
            CliError::Usage(e) => ("usage", e),
            CliError::Data(e) => ("data", e),
            CliError::Runtime(e) => ("runtime", e),
        };
        write!(f, "{kind} error: {err:#}")
    }
}

#[derive(Debug, Parser)]
#[command(name = "hata", version, about = "Human-aware multi-robot task allocation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a per-time-window occupancy stack from a pedestrian track log.
    BuildMods(build_mods::BuildModsArgs),
    /// Tune the cost weights with GP-based Bayesian optimization.
    Tune(tune::TuneArgs),
    /// Execute an experiment batch (methods x fleets x thresholds x windows x runs).
    RunBatch(batch::RunBatchArgs),
    /// Summarize raw batch outputs into comparison tables and timing series.
    Report(report::ReportArgs),
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::BuildMods(args) => build_mods::run(args),
        Command::Tune(args) => tune::run(args),
        Command::RunBatch(args) => batch::run(args),
        Command::Report(args) => report::run(args),
    }
}
