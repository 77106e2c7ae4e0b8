//! Command-line front end: JSON config, subcommands and persisted outputs.

pub mod config;
pub mod manifest;

mod commands;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::LoadedModel;
pub use config::{ModelMethod, PipelineConfig};
pub use manifest::{read_manifest, Manifest};

/// An error tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub source: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.module, self.source)
    }
}

impl std::error::Error for CliError {}

pub(crate) trait Tag<T> {
    fn tag(self, module: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError { module, source: e.into() })
    }
}

pub(crate) fn fail<T>(module: &'static str, msg: impl fmt::Display) -> Result<T, CliError> {
    Err(CliError { module, source: anyhow::anyhow!("{msg}") })
}

#[derive(Debug, Parser)]
#[command(name = "lingtraits", version, about = "Latent linguistic traits from per-user text")]
pub struct Cli {
    /// JSON pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config `out_dir` (default `out`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus with planted factors plus a matching config.
    GenFixture(FixtureArgs),
    /// Fit a factor (or topic) model and score the training users.
    Fit(FitArgs),
    /// Score a corpus with a saved model.
    Score(ScoreArgs),
    /// Cross-validated prediction of outcomes from demographics, scores and both.
    Eval(EvalArgs),
    /// Test-retest stability and dropout reliability.
    Stability(StabilityArgs),
    /// Most and least correlated tokens per factor.
    Dla(DlaArgs),
    /// NMF clustering of likes into classification targets.
    ClusterLikes(ClusterArgs),
    /// Match and correlate the columns of two per-user score tables.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub terms: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub loading: Option<f64>,
    #[arg(long)]
    pub factor_corr: Option<f64>,
    #[arg(long)]
    pub periods: Option<usize>,
    /// Factor indices (0-based) that carry signal only in period 0.
    #[arg(long, value_delimiter = ',')]
    pub transient: Option<Vec<usize>>,
    #[arg(long)]
    pub tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<ModelMethod>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Saved model; defaults to `<out-dir>/model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Messages to score instead of the configured ones.
    #[arg(long)]
    pub messages: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    #[arg(long)]
    pub n_splits: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub drop_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DlaArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Partial out age and gender.
    #[arg(long)]
    pub controls: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub likes: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Table whose columns define the rows of the output.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

/// Effective config: file (or defaults) with global flags applied.
pub fn effective_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).tag("config")?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    if let Some(n) = cfg.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    commands::dispatch(cli.command, cfg)
}
