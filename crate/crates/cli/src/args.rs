use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "kroncov",
    version,
    about = "Kronecker-structured space-time covariance estimation and LLR track classification"
)]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw labeled train and test track files from a synthetic scenario.
    Simulate(SimulateArgs),
    /// Fit per-class block models and combining weights on training tracks.
    Fit(FitArgs),
    /// Score and label every track of a file with a fitted classifier.
    Classify(ClassifyArgs),
    /// Report accuracy of a results file that carries true labels.
    Eval(EvalArgs),
    /// Monte Carlo accuracy sweep over training size, window and method.
    Sweep(SweepArgs),
    /// Summarize a model or classifier file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    WellSeparated,
}

/// Scenario preset plus optional overrides.
#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub scenario: Preset,
    /// Spatial grid, e.g. 4x4.
    #[arg(long)]
    pub grid: Option<String>,
    /// Expected feature count; must equal the grid size.
    #[arg(long)]
    pub p: Option<usize>,
    /// Window length of the generating process.
    #[arg(long = "gen-T")]
    pub gen_t: Option<usize>,
    /// True separation rank.
    #[arg(long)]
    pub true_rank: Option<usize>,
    /// Distance between the class means.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Temporal correlation base of each class.
    #[arg(long, num_args = 2, value_names = ["CLASS0", "CLASS1"])]
    pub decay: Option<Vec<f64>>,
    /// Level of the diagonal noise term.
    #[arg(long)]
    pub noise_floor: Option<f64>,
    /// Frames per track.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output directory for train.ftrk, test.ftrk and scenario.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Training tracks (half per class).
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    /// Test tracks (half per class).
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    /// Seed of the scenario and of the track draws.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Estimator and classifier knobs shared by `fit` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Target separation rank; the penalty is searched to reach it.
    #[arg(long, conflicts_with = "beta")]
    pub rank: Option<usize>,
    /// Fixed nuclear-norm penalty.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Levels of the dyadic block tree.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Shrinkage weight in [0, 1] used instead of the Ledoit-Wolf estimate.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Skip the fixed-rank polish after the penalized fit.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Labeled training tracks.
    #[arg(long)]
    pub train: PathBuf,
    /// Output classifier file.
    #[arg(long)]
    pub model: PathBuf,
    /// Frames per multiframe window.
    #[arg(long = "T", default_value_t = 4)]
    pub window: usize,
    /// Frames between windows (default: the window length).
    #[arg(long)]
    pub stride: Option<usize>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Train the single-block quadratic classifier instead.
    #[arg(long)]
    pub overall: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Classifier written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Tracks to classify; labels are optional.
    #[arg(long)]
    pub test: PathBuf,
    /// Output results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Score with the full-grid block alone (unit weight, zero intercept).
    #[arg(long)]
    pub overall: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Results CSV with a true_label column.
    pub results: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Method {
    LogisticLlr,
    OverallLlr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LogisticLlr => "logistic-llr",
            Method::OverallLlr => "overall-llr",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Training set sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 500])]
    pub n: Vec<usize>,
    /// Window lengths.
    #[arg(long = "T", value_delimiter = ',', default_values_t = [1, 4, 6])]
    pub windows: Vec<usize>,
    /// Classification methods to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::LogisticLlr, Method::OverallLlr])]
    pub methods: Vec<Method>,
    /// Independent train/test draws per cell.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Test tracks per trial.
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Model or classifier file.
    #[arg(long)]
    pub model: PathBuf,
}
