use std::path::PathBuf;

use clap::builder::RangedU64ValueParser;
use clap::{Args, Parser, Subcommand};
use ou_diffuse::nn::{Activation, OptimizerKind};
use ou_diffuse::sampler::Method;
use ou_diffuse::schedule::ScheduleParams;
use ou_diffuse::trainer::{LrDecay, PredictionTarget};
use serde::Serialize;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "ou-diffuse",
    version,
    about = "Synthetic tabular data from an Ornstein-Uhlenbeck diffusion model",
    args_override_self = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory that relative output paths are placed in.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate forward trajectories from a fixed starting point.
    Simulate(SimulateArgs),
    /// Plot the forward process of a 2-D dataset above the reverse process of a model.
    Timeline(TimelineArgs),
    /// Train a denoising network on a CSV table.
    Train(TrainArgs),
    /// Sample synthetic rows from a trained model.
    Generate(GenerateArgs),
    /// Append synthetic rows to a labelled training table.
    Augment(AugmentArgs),
    /// Precision, recall and F1 from prediction and ground-truth files.
    Evaluate(EvaluateArgs),
    /// Energy distance between two samples, optionally with a permutation null.
    Distance(DistanceArgs),
    /// Random (optionally stratified) train/test split of a CSV table.
    Split(SplitArgs),
    /// Re-run a command from its run manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Timeline(_) => "timeline",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Augment(_) => "augment",
            Command::Evaluate(_) => "evaluate",
            Command::Distance(_) => "distance",
            Command::Split(_) => "split",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScheduleArgs {
    /// Number of diffusion steps N.
    #[arg(long = "steps", default_value_t = ScheduleParams::default().n_steps)]
    pub n_steps: usize,
    /// Per-step variance at the first step.
    #[arg(long = "beta-min", visible_alias = "b-min", default_value_t = ScheduleParams::default().b_min)]
    pub b_min: f64,
    /// Per-step variance at the last step.
    #[arg(long = "beta-max", visible_alias = "b-max", default_value_t = ScheduleParams::default().b_max)]
    pub b_max: f64,
}

impl ScheduleArgs {
    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            n_steps: self.n_steps,
            b_min: self.b_min,
            b_max: self.b_max,
        }
    }
}

fn positive() -> RangedU64ValueParser<usize> {
    RangedU64ValueParser::<usize>::new().range(1..)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Starting point, one value per dimension (comma separated).
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 10, value_parser = positive())]
    pub trajectories: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Trajectory table (columns trajectory,n,t,x1..xd).
    #[arg(long, default_value = "trajectories.csv")]
    pub output: PathBuf,
    /// Also draw trajectories and a density panel to this SVG file.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Grid indices at which the density panel shows a KDE [default: N/10, N/4, N].
    #[arg(long, value_delimiter = ',')]
    pub kde_at: Option<Vec<usize>>,
    /// At most this many trajectories are drawn as polylines.
    #[arg(long, default_value_t = 100)]
    pub max_lines: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TimelineArgs {
    /// Two-feature data table.
    #[arg(long)]
    pub data: PathBuf,
    /// Column to exclude from the features.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Keep only rows of this class.
    #[arg(long, requires = "label_column")]
    pub class: Option<i64>,
    #[arg(long)]
    pub model: PathBuf,
    /// Grid indices to show [default: 0, N/4, N/2, 3N/4, N].
    #[arg(long, value_delimiter = ',')]
    pub at: Option<Vec<usize>>,
    /// Samples pushed through the reverse process.
    #[arg(long, default_value_t = 1000, value_parser = positive())]
    pub count: usize,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, default_value = "timeline.svg")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Label column, excluded from the features.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Train only on rows of this class.
    #[arg(long, requires = "label_column")]
    pub class: Option<i64>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// What the network predicts: epsilon, x0 or mu.
    #[arg(long, default_value = "epsilon")]
    pub target: PredictionTarget,
    #[arg(long, default_value_t = 200, value_parser = positive())]
    pub epochs: usize,
    #[arg(long, default_value_t = 256, value_parser = positive())]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Learning-rate schedule: cosine or constant.
    #[arg(long, default_value = "cosine")]
    pub lr_decay: LrDecay,
    /// Hidden layer widths (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "128,128,128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value = "silu")]
    pub activation: Activation,
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    /// Use every transition of each point per update instead of one random one.
    #[arg(long)]
    pub all_steps: bool,
    /// Build noisy inputs by stepping the recursion rather than the closed form.
    #[arg(long)]
    pub literal_trajectories: bool,
    /// Stop after this many epochs without improvement.
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    #[arg(long, default_value = "model.json")]
    pub output: PathBuf,
    /// Per-epoch loss table.
    #[arg(long, default_value = "loss.csv")]
    pub loss_output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = positive())]
    pub count: usize,
    /// Sampling route: epsilon, x0 or mu [default: the model's own].
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, default_value = "synthetic.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub synthetic: PathBuf,
    /// Label given to every synthetic row.
    #[arg(long)]
    pub label: i64,
    #[arg(long, default_value = "Class")]
    pub label_column: String,
    #[arg(long, default_value = "augmented.csv")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub actual: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub positive: i64,
    /// Column read from both files [default: the last column of each].
    #[arg(long)]
    pub column: Option<String>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DistanceArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Column to exclude from either sample where present.
    #[arg(long)]
    pub label_column: Option<String>,
    /// Random relabellings of the pooled samples used as the null.
    #[arg(long, default_value_t = 0)]
    pub null_splits: usize,
    /// Also write the result as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Keep label proportions equal on both sides.
    #[arg(long, requires = "label_column")]
    pub stratify: bool,
    #[arg(long, default_value = "train.csv")]
    pub train_output: PathBuf,
    #[arg(long, default_value = "test.csv")]
    pub test_output: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
