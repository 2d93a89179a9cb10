//! Command-line front end for the `synres` crate.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numeric abort,
//! 4 I/O error, 5 corrupt checkpoint or dataset.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod metrics;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use synres::datagen::TaskKind;
use synres::GateMode;

pub use error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    #[value(name = "32")]
    F32,
    #[value(name = "64")]
    F64,
}

#[derive(Debug, Parser)]
#[command(
    name = "synres",
    version,
    about = "Train and evaluate a micro-transformer with resonance-gated attention"
)]
pub struct Cli {
    /// Overrides every seed in the config (data and training).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (train, ablate) or file (eval, bench, gen-data).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Element precision for training and benchmarking.
    #[arg(long, global = true, value_enum, default_value = "32")]
    pub precision: Precision,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a TOML config.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Measure forward latency with the gate learned vs disabled.
    Bench(BenchArgs),
    /// Write a synthetic dataset plus a JSON sidecar.
    GenData(GenDataArgs),
    /// Train gate-on and gate-off arms on identical data and compare them.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = parse_gate_mode)]
    pub gate_mode: Option<GateMode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMetric {
    Perplexity,
    Retention,
    Noise,
    Coherence,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Take the task from this config instead of the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise levels in percent.
    #[arg(long, value_delimiter = ',', default_values_t = synres::eval::DEFAULT_NOISE_LEVELS)]
    pub noise_levels: Vec<f64>,
    /// Probe distances for key-value recall (overrides the task's).
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<usize>>,
    /// Metrics to compute; all that apply to the task by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metrics: Option<Vec<EvalMetric>>,
    #[arg(long, value_parser = parse_gate_mode)]
    pub gate_mode: Option<GateMode>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub checkpoint: Option<PathBuf>,
    /// Benchmark a freshly initialised model of this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = synres::eval::DEFAULT_SEQ_LENS)]
    pub seq_lens: Vec<usize>,
    #[arg(long, default_value_t = synres::eval::MIN_REPETITIONS)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_parser = parse_task_kind)]
    pub task: TaskKind,
    #[arg(long)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub pairs: usize,
    #[arg(long, value_delimiter = ',')]
    pub distances: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub vocab_size: usize,
    #[arg(long)]
    pub value_tokens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = synres::eval::DEFAULT_NOISE_LEVELS)]
    pub noise_levels: Vec<f64>,
}

fn parse_gate_mode(s: &str) -> Result<GateMode, String> {
    s.parse().map_err(|e: synres::Error| e.to_string())
}

fn parse_task_kind(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: synres::Error| e.to_string())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("synres: {e}");
            e.exit_code()
        }
    }
}
