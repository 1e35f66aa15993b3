//! Command-line front end: `generate` synthetic training samples,
//! `segment` scans with a predictor, `evaluate` segmentations against
//! references.

mod config;
mod evaluate;
mod files;
mod generate;
mod segment;
pub mod stub_predictor;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

pub use config::RunConfig;

/// Environment variable holding the log filter (`error`, `info`, `debug`).
pub const LOG_ENV: &str = "NSF_LOG_LEVEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Generate,
    Segment,
    Evaluate,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "brainsynth", version, about = "Synthetic brain MRI generation, segmentation and evaluation")]
pub struct Args {
    #[arg(long, value_enum)]
    pub command: Command,

    /// Input file or directory; repeat for several. `evaluate` takes the
    /// predictions (or scans, with --predictor) first and references second.
    #[arg(long)]
    pub input: Vec<PathBuf>,

    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Label schema JSON; the built-in brain schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,

    /// `key = value` file with generator and run settings; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Number of samples to generate.
    #[arg(long)]
    pub count: Option<usize>,

    #[arg(long, conflicts_with = "random_seed")]
    pub seed: Option<u64>,

    #[arg(long)]
    pub workers: Option<usize>,

    /// `stub`, `uniform`, or an external predictor command line.
    #[arg(long)]
    pub predictor: Option<String>,

    /// Left-right flip test-time augmentation (the default).
    #[arg(long, overrides_with = "no_tta")]
    pub tta: bool,

    #[arg(long, overrides_with = "tta")]
    pub no_tta: bool,

    /// Draw a fresh seed instead of the fixed default.
    #[arg(long)]
    pub random_seed: bool,
}

/// How a run ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
    Partial,
}

impl Outcome {
    /// Success when nothing failed, failure when nothing succeeded.
    pub fn from_counts(succeeded: usize, failed: usize) -> Self {
        match (succeeded, failed) {
            (_, 0) => Outcome::Success,
            (0, _) => Outcome::Failure,
            _ => Outcome::Partial,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Failure => 1,
            Outcome::Partial => 2,
        }
    }
}

pub fn init_logging() {
    let filter = std::env::var(LOG_ENV).unwrap_or_else(|_| "info".into());
    let _ = env_logger::Builder::new()
        .parse_filters(&filter)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Resolves the configuration and runs the command on a pool of
/// `workers` threads.
pub fn run(args: Args) -> Outcome {
    let cfg = match RunConfig::resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return Outcome::Failure;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => {
            log::error!("cannot start {} workers: {e}", cfg.workers);
            return Outcome::Failure;
        }
    };
    log::debug!("{cfg:?}");
    pool.install(|| match cfg.command {
        Command::Generate => generate::run(&cfg),
        Command::Segment => segment::run(&cfg),
        Command::Evaluate => evaluate::run(&cfg),
    })
}

/// Usage errors exit with 1 rather than clap's 2, which here means a
/// partial failure.
pub fn main() -> ExitCode {
    init_logging();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    ExitCode::from(run(args).code())
}
