mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;

/// Process exit status for each failure class.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Partial(String),
    Flagged(String),
    Mismatch(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Partial(_) => 4,
            Self::Flagged(_) => 5,
            Self::Mismatch(_) => 6,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Partial(m) => write!(f, "partial failure: {m}"),
            Self::Flagged(m) => write!(f, "report flagged: {m}"),
            Self::Mismatch(m) => write!(f, "inference mismatch: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dopplerga", version, about = "Gestational-age estimation from 1D Doppler ultrasound recordings")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Preprocess recordings and write feature caches.
    Features(FeaturesArgs),
    /// Train one model on a whole corpus.
    Train(TrainArgs),
    /// Repeated stratified k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Estimate gestational age with a trained model.
    Estimate(EstimateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Distribution {
    Clinical,
    Uniform,
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Clinical => "clinical",
            Self::Uniform => "uniform",
        })
    }
}

impl std::str::FromStr for Distribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub distribution: Option<Distribution>,
    /// Recording length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// In-band SNR in dB (`inf` for clean audio).
    #[arg(long)]
    pub snr: Option<f64>,
    /// Standard deviation of the GA presumption error, months.
    #[arg(long)]
    pub eta_std: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Dataset manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct NetArgs {
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub hidden_c1: Option<usize>,
    #[arg(long)]
    pub hidden_c2: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature cache directory written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for the model and training history.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Output directory for the report.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for the estimate CSVs.
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest whose recordings to estimate (instead of positional files).
    #[arg(long, conflicts_with = "recordings")]
    pub manifest: Option<PathBuf>,
    /// Visit identifier for positional recordings.
    #[arg(long, default_value = "V1")]
    pub visit_id: String,
    /// Patient identifier for positional recordings.
    #[arg(long, default_value = "unknown")]
    pub patient_id: String,
    /// WAV recordings of one visit.
    #[arg(required_unless_present = "manifest")]
    pub recordings: Vec<PathBuf>,
}
