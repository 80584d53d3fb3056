//! `hazbn`: config-driven driver for the joint tropical-cyclone hazard
//! pipeline.
//!
//! Subcommands: `build` (construct and persist the discrete tables),
//! `hazard` (curves and the joint surface), `deagg` (evidence-case
//! deaggregation bundles), `validate` (re-check every emitted artifact),
//! and `oracle-check` (network vs. explicit-summation agreement).
//!
//! Exit codes: 0 success; 2 configuration or usage error; 3 numerical
//! validation failure; 4 zero-probability evidence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod products;
mod validate;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("no build artifacts at {0}; run `hazbn build` first")]
    MissingArtifacts(PathBuf),
    #[error("{0}")]
    Engine(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("zero-probability evidence: {0}")]
    ZeroEvidence(String),
}

impl CliError {
    /// 2 for configuration and usage problems, 3 for numerical
    /// validation failures, 4 for zero-probability evidence.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_)
            | CliError::Io { .. }
            | CliError::Json { .. }
            | CliError::Csv { .. }
            | CliError::MissingArtifacts(_) => 2,
            CliError::Engine(_) | CliError::Validation(_) => 3,
            CliError::ZeroEvidence(_) => 4,
        }
    }
}

impl From<hazbn::config::ConfigError> for CliError {
    fn from(e: hazbn::config::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<hazbn::study::StudyError> for CliError {
    fn from(e: hazbn::study::StudyError) -> Self {
        use hazbn::study::StudyError;
        match e {
            StudyError::Config(c) => CliError::Config(c.to_string()),
            StudyError::Io { path, source } => CliError::Io { path, source },
            StudyError::Json { path, source } => CliError::Json { path, source },
            StudyError::BadTable { .. } => CliError::Validation(e.to_string()),
            other => CliError::Engine(other.to_string()),
        }
    }
}

impl From<hazbn::hazard::HazardError> for CliError {
    fn from(e: hazbn::hazard::HazardError) -> Self {
        CliError::Engine(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hazbn",
    version,
    about = "Joint tropical-cyclone hazard assessment and deaggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Study configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, resolved
    /// against the config file's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap the worker-thread count; defaults to all cores. Numerical
    /// results are identical for every thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the discrete tables and persist them with a run manifest.
    Build {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the configured Monte-Carlo base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Emit per-channel hazard curves, the two-hazard joint surface, and
    /// a summary. Requires `build` artifacts.
    Hazard {
        #[command(flatten)]
        common: CommonArgs,
        /// Also compute the explicit-summation column for every curve
        /// and fail if the two paths disagree.
        #[arg(long)]
        oracle: bool,
    },
    /// Run the evidence cases and emit one deaggregation bundle per
    /// case. Requires `build` artifacts.
    Deagg {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated case labels to run; defaults to all.
        #[arg(long, value_delimiter = ',')]
        cases: Vec<String>,
    },
    /// Re-read every emitted artifact and re-check its invariants.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare network hazard rates against the explicit summation at
    /// every bin edge. Requires `build` artifacts.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Build { common, .. }
            | Command::Hazard { common, .. }
            | Command::Deagg { common, .. }
            | Command::Validate { common }
            | Command::OracleCheck { common } => common,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Build { common, seed } => commands::cmd_build(
            &common.config,
            *seed,
            common.threads,
            common.out.as_deref(),
        ),
        Command::Hazard { common, oracle } => {
            commands::cmd_hazard(&common.config, common.out.as_deref(), *oracle)
        }
        Command::Deagg { common, cases } => {
            commands::cmd_deagg(&common.config, common.out.as_deref(), cases)
        }
        Command::Validate { common } => {
            commands::cmd_validate(&common.config, common.out.as_deref())
        }
        Command::OracleCheck { common } => {
            commands::cmd_oracle_check(&common.config, common.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.command.common().threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
