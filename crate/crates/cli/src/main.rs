mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use driftkit::Dataset;

/// Exit status for a failed theory property.
pub const EXIT_THEORY: u8 = 3;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "driftkit", version, about = "Drift detection and drifting-feature decomposition for data streams")]
pub struct Cli {
    /// Seed for stream generation and randomized tests.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "DRIFTKIT_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,

    /// TOML or JSON file with flag values; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print progress and timings to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic stream as CSV plus a ground-truth JSON sidecar.
    Generate(GenerateArgs),
    /// Run one detector over a stream CSV.
    Detect(DetectArgs),
    /// Run a benchmark grid over seeds and report scores and runtimes.
    Bench(BenchArgs),
    /// Split a stream into drifting part and residual.
    Decompose(DecomposeArgs),
    /// Check the finite-process drift equivalences on random instances.
    TheoryCheck(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// One of: twister, spiral, y, square, sea, rplane, fool_error, fool_marginal.
    #[arg(long, default_value = "twister", value_parser = parse_dataset)]
    pub dataset: Dataset,

    /// Number of samples.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    /// Generator parameter override, `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub param: Vec<String>,

    /// Output CSV; the sidecar is written next to it as `<stem>.truth.json`.
    /// Defaults to `<out-dir>/<dataset>.csv`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Stream CSV with a `t` column, `f*` feature columns and optional `y`.
    #[arg(short, long)]
    pub input: PathBuf,

    /// One of: swidd, adwin, ddm, hdddm, k2st.
    #[arg(long, default_value = "swidd")]
    pub detector: String,

    /// Detector setting override, `key=value`; repeatable. Run
    /// `driftkit detect --help` for the settings of each detector.
    #[arg(long = "param", value_name = "KEY=VALUE", long_help = commands::detector_param_help())]
    pub param: Vec<String>,

    /// Ground-truth JSON; adds precision, recall and F1 to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,

    /// Samples after a change within which a detection counts.
    #[arg(long, default_value_t = 100)]
    pub tolerance: usize,

    /// Leading samples used to train the classifier behind adwin and ddm.
    #[arg(long, default_value_t = 100)]
    pub train_size: usize,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// `detection` (SEA and rotating hyperplane, five detectors),
    /// `decomposition` (square, Y and twister), or a JSON suite file.
    #[arg(long, default_value = "detection")]
    pub suite: String,

    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,

    /// Matching tolerances in samples, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub tolerances: Vec<usize>,

    /// Stream length for the decomposition suite.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    /// Neighbours of the time-dependency score.
    #[arg(long, default_value_t = 5)]
    pub knn: usize,

    /// JSON report path. Defaults to `<out-dir>/bench.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Also write one CSV row per (detector, dataset, seed, tolerance).
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Linear,
    Kcurve,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Stream CSV. Without it a stream is generated from `--dataset`.
    #[arg(short, long)]
    pub input: Option<PathBuf>,

    /// Dataset to generate when no input is given.
    #[arg(long, default_value = "twister", value_parser = parse_dataset)]
    pub dataset: Dataset,

    /// Length of the generated stream.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    #[arg(long, value_enum, default_value_t = Method::Linear)]
    pub method: Method,

    /// Linear: number of independent sources (0 = features + 1).
    #[arg(long, default_value_t = 0)]
    pub n_sources: usize,

    /// Linear: minimal mutual information with time, in nats, or `auto`
    /// for the mean over sources.
    #[arg(long, default_value = "auto")]
    pub i_min: String,

    /// k-curve: number of curves.
    #[arg(long, default_value_t = 20)]
    pub k: usize,

    /// k-curve: number of chunks the stream is fed in.
    #[arg(long, default_value_t = 20)]
    pub chunks: usize,

    /// k-curve: RBF prototypes per curve.
    #[arg(long, default_value_t = 10)]
    pub prototypes: usize,

    /// Neighbours of the time-dependency score.
    #[arg(long, default_value_t = 5)]
    pub knn: usize,

    /// Decomposition CSV. Defaults to `<out-dir>/decomposition.csv`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Scores JSON. Defaults to `<out-dir>/scores.json`.
    #[arg(long)]
    pub scores: Option<PathBuf>,

    /// Also write the fitted model as JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    /// Number of random processes.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,

    /// Largest number of time points and of values.
    #[arg(long, default_value_t = 6)]
    pub max_dim: usize,
}

fn parse_dataset(s: &str) -> Result<Dataset, String> {
    s.parse::<Dataset>().map_err(|e| e.to_string())
}

/// Failure split by exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
    Theory(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn parse_args() -> Result<Cli, clap::Error> {
    let argv: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let command = Cli::command().args_override_self(true);
    let matches = command.clone().try_get_matches_from(&argv)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let extra = config::load(path)
        .and_then(|cfg| config::extra_args(&cfg, &command, &matches))
        .map_err(|e| Cli::command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}")))?;
    if extra.is_empty() {
        return Ok(cli);
    }
    let mut full = argv;
    full.extend(extra);
    let matches = command.try_get_matches_from(full)?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Theory(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_THEORY)
        }
    }
}
