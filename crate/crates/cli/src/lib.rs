//! The `acdnet` command line: simulate, fit, evaluate, compare, attention
//! and stats subcommands over trade-duration data.

use std::ffi::OsString;
use std::path::PathBuf;

use acdnet_core::acd::Tail;
use acdnet_core::data::TimeUnit;
use acdnet_core::nets::ModelKind;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod commands;
pub mod config;
mod input;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(acdnet_core::Error),
    #[error(transparent)]
    Numeric(acdnet_core::Error),
}

impl From<acdnet_core::Error> for CliError {
    fn from(e: acdnet_core::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e)
        } else {
            CliError::Data(e)
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "acdnet", version, about = "Fit, forecast and evaluate trade-duration models")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Tick file (timestamp,price,volume,side) or duration series file
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment configuration (TOML); flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Unit of tick timestamps
    #[arg(long, global = true, value_enum)]
    pub units: Option<Units>,
    /// Worker threads for independent models
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Ms,
    S,
}

impl From<Units> for TimeUnit {
    fn from(u: Units) -> Self {
        match u {
            Units::Ms => TimeUnit::Ms,
            Units::S => TimeUnit::S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Lower,
    Upper,
}

impl From<TailArg> for Tail {
    fn from(t: TailArg) -> Self {
        match t {
            TailArg::Lower => Tail::Lower,
            TailArg::Upper => Tail::Upper,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an ACD process with exponential errors
    Simulate(SimulateArgs),
    /// Fit models on the training part of a series
    Fit(FitArgs),
    /// Score fitted models on the test part of a series
    Evaluate(EvaluateArgs),
    /// Tabulate evaluation reports and count per-metric wins
    Compare(CompareArgs),
    /// Average attention weights per lag over the test set
    Attention(AttentionArgs),
    /// Autocorrelations and summary statistics of durations
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub omega: Option<f64>,
    /// ACD α coefficients, comma separated
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// ACD β coefficients, comma separated
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Also synthesize volume and side columns
    #[arg(long)]
    pub features: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Instrument name; defaults to the input file stem
    #[arg(long)]
    pub instrument: Option<String>,
    /// Session open as HH:MM[:SS]; earlier ticks are dropped
    #[arg(long)]
    pub session_open: Option<String>,
    /// Offset added to tick timestamps to get exchange-local time
    #[arg(long, allow_hyphen_values = true)]
    pub utc_offset_minutes: Option<i64>,
    /// Keep same-timestamp trades separate (zero durations are then an error)
    #[arg(long)]
    pub no_merge: bool,
    /// Drop durations longer than this many seconds (e.g. overnight gaps)
    #[arg(long)]
    pub max_duration: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Train:validation ratio, e.g. 8:2
    #[arg(long)]
    pub train_ratio: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Models to fit, comma separated
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub model: Vec<ModelKind>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Models to evaluate; defaults to every fitted model found
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub model: Vec<ModelKind>,
    /// Directory holding fitted models; defaults to <output-dir>/models
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Time-at-risk probability levels, comma separated
    #[arg(long, value_delimiter = ',')]
    pub alpha_levels: Vec<f64>,
    #[arg(long, value_enum)]
    pub tail: Option<TailArg>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Report files or directories of reports; defaults to <output-dir>/reports
    #[arg(long, value_delimiter = ',')]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AttentionArgs {
    /// An attention model; defaults to attn_lstm_acd
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[arg(long, default_value_t = 50)]
    pub max_lag: usize,
    #[command(flatten)]
    pub data: DataArgs,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: acdnet_core::Error| e.to_string())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    commands::dispatch(cli)
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("{}", msg.trim_end()),
                other => eprintln!("error: {other}"),
            }
            e.exit_code()
        }
    }
}
