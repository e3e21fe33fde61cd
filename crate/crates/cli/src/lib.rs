//! `scenereg`: register objects into scans, extract pose supervision,
//! evaluate scene metrics, generate synthetic scenes and run the
//! multi-object decoder from the command line.
//!
//! Every command takes `--config` (TOML), `--seed` and `--threads`
//! (default from `SCENEREG_THREADS`); flags override the file. Reports embed
//! the resolved configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "scenereg",
    version,
    about = "Object-to-scene registration and scene evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = config::THREADS_ENV)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine every object's init_pose against the scan.
    Register(commands::register::RegisterArgs),
    /// Contact, depth and reconstruction metrics for a manifest.
    Metrics(commands::metrics::MetricsArgs),
    /// Pose supervision targets of a prediction against ground truth.
    Supervise(commands::supervise::SuperviseArgs),
    /// Generate synthetic scenes.
    Genscene(commands::genscene::GensceneArgs),
    /// Refine poses with the multi-object decoder.
    Mod(commands::refine::ModArgs),
}

/// Runs a parsed command inside a worker pool of the configured size and
/// returns the exit code.
pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), cli.global.seed, cli.global.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} threads: {e}", cfg.threads)))?;
    pool.install(|| match &cli.command {
        Command::Register(a) => commands::register::run(a, &cfg),
        Command::Metrics(a) => commands::metrics::run(a, &cfg),
        Command::Supervise(a) => commands::supervise::run(a, &cfg),
        Command::Genscene(a) => commands::genscene::run(a, &cfg),
        Command::Mod(a) => commands::refine::run(a, &cfg),
    })
}
