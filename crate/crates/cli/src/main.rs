//! `pseudocal` command-line tool.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pseudocal::pseudo_target::{DEFAULT_FILTER_THRESHOLD, DEFAULT_LAMBDA};
use pseudocal::LabelMode;

#[derive(Debug, Parser)]
#[command(
    name = "pseudocal",
    version,
    about = "Source-free calibration under domain shift",
    args_override_self = true
)]
struct Cli {
    /// JSON object of flag values, keyed by long flag name. Flags given on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic source/target task.
    Generate(GenerateArgs),
    /// Train a classifier on a task's labeled source split.
    Train(TrainArgs),
    /// Fit a calibrator from unlabeled target inputs.
    Calibrate(CalibrateArgs),
    /// Compare calibration methods on a labeled task.
    Evaluate(EvaluateArgs),
    /// PseudoCal ECE over a grid of mix ratios and label modes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 2000)]
    n_source: usize,
    #[arg(long, default_value_t = 2000)]
    n_target: usize,
    /// Per-class translation of target means, in units of cluster std.
    #[arg(long, default_value_t = 0.0)]
    mean_shift: f64,
    /// Rotation angle (radians) applied to target inputs.
    #[arg(long, default_value_t = 0.0)]
    rotation: f64,
    #[arg(long, default_value_t = 1.0)]
    cluster_std: f64,
    /// Distance between class means.
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Comma-separated target class priors; zeros drop classes.
    #[arg(long, value_delimiter = ',')]
    priors: Option<Vec<f64>>,
    /// Omit target labels from the task document.
    #[arg(long)]
    strip_target_labels: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Logit sharpening factor applied at inference.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Width of a tanh hidden layer; omit for logistic regression.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    init_scale: f64,
    #[arg(long)]
    bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss/error CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    #[value(name = "pseudocal")]
    PseudoCal,
    #[value(name = "pseudo_label")]
    PseudoLabel,
    #[value(name = "filtered_pl")]
    FilteredPl,
    #[value(name = "pseudocal_same")]
    PseudoCalSame,
    #[value(name = "beta_mixup")]
    BetaMixup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Hard,
    Soft,
}

impl From<Mode> for LabelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Hard => LabelMode::Hard,
            Mode::Soft => LabelMode::Soft,
        }
    }
}

#[derive(Debug, Args)]
struct MixupArgs {
    /// Fixed mix ratio, in (0.5, 1].
    #[arg(long, default_value_t = DEFAULT_LAMBDA, value_parser = parse_lambda)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = Mode::Hard)]
    label_mode: Mode,
    /// Passes over the target set.
    #[arg(long, default_value_t = 1)]
    mixup_epochs: usize,
    /// Pair within mini-batches of this size instead of the whole set.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Confidence threshold of the filtered pseudo-label variant.
    #[arg(long, default_value_t = DEFAULT_FILTER_THRESHOLD)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = Variant::PseudoCal)]
    variant: Variant,
    #[command(flatten)]
    mixup: MixupArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-sample audit CSV of the pseudo-target set (mixup variants only).
    #[arg(long)]
    provenance: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated methods, e.g. none,oracle,pseudocal.
    #[arg(long, default_value = "none,temp_oracle,pseudocal")]
    methods: String,
    #[arg(long, default_value_t = 15)]
    bins: usize,
    #[command(flatten)]
    mixup: MixupArgs,
    /// Members of the deep-ensemble baseline.
    #[arg(long, default_value_t = 5)]
    ensemble_members: usize,
    /// First run seed; run k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the text table to this file.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Directory receiving one reliability CSV per method (first run).
    #[arg(long)]
    bins_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.51,0.55,0.6,0.65,0.7,0.8,0.9"
    )]
    lambdas: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hard,soft")]
    label_mode: Vec<Mode>,
    #[arg(long, default_value_t = 15)]
    bins: usize,
    #[arg(long, default_value_t = 1)]
    mixup_epochs: usize,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mixup seeds averaged per cell, starting at --seed.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.5 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0.5, 1], got {v}"))
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Lib(pseudocal::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Lib(e) => e.kind(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<pseudocal::Error> for CliError {
    fn from(e: pseudocal::Error) -> Self {
        CliError::Lib(e)
    }
}

fn run() -> Result<(), CliError> {
    let argv = config::expand_args(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Usage(
                line.trim_start_matches("error: ").to_string(),
            ));
        }
    };
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Sweep(a) => commands::sweep(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: kind={} message={}", e.kind(), message);
            ExitCode::from(e.exit_code())
        }
    }
}
