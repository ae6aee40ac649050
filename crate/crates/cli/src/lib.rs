//! The `fednoniid` command line: fetch, partition, nei, train, grid, report.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing, unreadable or malformed input, failed download), 3 runtime
//! failure.

pub mod commands;
pub mod config;
pub mod datasets;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fednoniid_core::grid::Format;

pub use config::{parse_config, parse_config_str, RunConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<fednoniid_core::Error> for CliError {
    fn from(e: fednoniid_core::Error) -> Self {
        use fednoniid_core::Error as E;
        let code = match e.root() {
            _ if e.is_data_error() => EXIT_DATA,
            E::Network { .. } => EXIT_DATA,
            E::InvalidSpec(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fednoniid",
    version,
    about = "Non-IID federated-learning benchmark toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download the dataset named by `dataset_mode` into the data directory.
    Fetch(CommonArgs),
    /// Split the train set into per-node shard archives.
    Partition(CommonArgs),
    /// Train the encoder and write the NEI report of the shards.
    Nei(CommonArgs),
    /// Run FedAvg over the shards and write the round log.
    Train(CommonArgs),
    /// Run the experiment grid of the `grid` block.
    Grid(CommonArgs),
    /// Render result tables written by `grid`.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `paths.out_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// A table JSON to render instead of every table in the output directory.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

impl CommonArgs {
    /// The config file with command-line overrides applied.
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = parse_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.paths.out_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the subcommand, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
