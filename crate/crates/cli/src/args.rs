//! Command-line flags. Every command serializes its resolved flags to
//! `config_used.json`; passing that file back with `--config` reruns the
//! command with identical settings.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lipreg::regularization::{RegularizationMode, DEFAULT_MAX_NORM_CAP};

#[derive(Debug, Parser)]
#[command(name = "lipreg", version, about = "Train and evaluate Lipschitz-regularized regression networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Train one network per selected mode on a shared split and
    /// initialization.
    Train(TrainArgs),
    /// Grid-search λ over several seeds for every mode, then report the
    /// selected configurations.
    Sweep(SweepArgs),
    /// Evaluate a saved model on a dataset, with and without input noise.
    Evaluate(EvaluateArgs),
    /// Write the two-weight contour grid of L̂ = |W1|·|W2|.
    Contour(ContourArgs),
    /// Rebuild the norm table from a report.json.
    Report(ReportArgs),
}

impl Command {
    pub fn output_dir(&self) -> &PathBuf {
        match self {
            Command::Train(a) => &a.output_dir,
            Command::Sweep(a) => &a.run.output_dir,
            Command::Evaluate(a) => &a.output_dir,
            Command::Contour(a) => &a.output_dir,
            Command::Report(a) => &a.output_dir,
        }
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Train(a) => a.output_dir = dir,
            Command::Sweep(a) => a.run.output_dir = dir,
            Command::Evaluate(a) => a.output_dir = dir,
            Command::Contour(a) => a.output_dir = dir,
            Command::Report(a) => a.output_dir = dir,
        }
    }

    pub fn config_file(&self) -> Option<&PathBuf> {
        match self {
            Command::Train(a) => a.config.as_ref(),
            Command::Sweep(a) => a.run.config.as_ref(),
            Command::Evaluate(a) => a.config.as_ref(),
            Command::Contour(a) => a.config.as_ref(),
            Command::Report(a) => a.config.as_ref(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Sweep(_) => "sweep",
            Command::Evaluate(_) => "evaluate",
            Command::Contour(_) => "contour",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    /// No regularization.
    None,
    /// Sum of per-layer spectral norms.
    Layer,
    /// Product of spectral norms across layers.
    Lipschitz,
    /// Per-neuron weight-row norm cap.
    Maxnorm,
}

impl ModeArg {
    pub fn resolve(self, lambda: f64, cap: f64) -> RegularizationMode {
        match self {
            ModeArg::None => RegularizationMode::NoReg,
            ModeArg::Layer => RegularizationMode::LayerSum { lambda },
            ModeArg::Lipschitz => RegularizationMode::LipschitzProduct { lambda },
            ModeArg::Maxnorm => RegularizationMode::MaxNorm { cap },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// CSV file with one numeric target column.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Target column, by header name or 0-based index.
    #[arg(long)]
    pub target: Option<String>,
    /// Regularization modes to train, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::None, ModeArg::Layer, ModeArg::Lipschitz, ModeArg::Maxnorm])]
    pub mode: Vec<ModeArg>,
    /// λ in (1/λ)·loss + penalty for the layer and lipschitz modes.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_NORM_CAP)]
    pub max_norm_cap: f64,
    /// Validation noise levels η, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4, 0.6])]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    /// Seed for initialization, shuffling and noise draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 20, 20])]
    pub hidden: Vec<usize>,
    /// Feed raw features to the network instead of z-scores.
    #[arg(long)]
    pub no_standardize: bool,
    /// Draw u from U([-1, 1]) instead of U([0, 1]).
    #[arg(long)]
    pub symmetric_noise: bool,
    /// One u per sample shared by all features.
    #[arg(long)]
    pub scalar_noise: bool,
    /// Keep the sample order fixed instead of reshuffling every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    #[arg(long, default_value_t = 1e-12)]
    pub power_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub power_max_iter: usize,
    /// Maximum number of training runs in parallel (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "lipreg-out")]
    pub output_dir: PathBuf,
    /// Rerun from a config_used.json; only --output-dir may be combined with it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub run: TrainArgs,
    /// λ values to search, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0, 100.0])]
    pub lambda_grid: Vec<f64>,
    /// Seeds trained for every grid point, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4])]
    pub seeds: Vec<u64>,
    /// Half-width of the square range of the contour grid.
    #[arg(long, default_value_t = 3.0)]
    pub contour_range: f64,
    #[arg(long, default_value_t = 301)]
    pub contour_resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Model file written by `train` or `sweep`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Preprocessing file; defaults to preprocessing.json next to the model.
    #[arg(long)]
    pub preprocessing: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4, 0.6])]
    pub eta: Vec<f64>,
    /// Rows to evaluate. `train` and `test` need a preprocessing file.
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub symmetric_noise: bool,
    #[arg(long)]
    pub scalar_noise: bool,
    #[arg(long, default_value = "lipreg-out")]
    pub output_dir: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ContourArgs {
    /// Grid covers [-range, range] on both weights.
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    #[arg(long, default_value_t = 301)]
    pub resolution: usize,
    #[arg(long, default_value = "lipreg-out")]
    pub output_dir: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// report.json written by `train` or `sweep`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "lipreg-out")]
    pub output_dir: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
