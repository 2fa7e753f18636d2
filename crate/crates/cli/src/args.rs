use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mhe::models::LossMode;
use mhe::theory::{LossKind, Optimizer};
use mhe::Strategy;

const AFTER_HELP: &str = "\
Relative dataset paths that do not exist in the working directory are looked \
up under $MHE_DATA_DIR when that variable is set.

Exit codes: 0 success, 1 usage or validation error, 2 I/O error, 3 property \
check failed.";

/// Multi-head encoding for extreme label classification.
#[derive(Debug, Parser)]
#[command(name = "mhe", version, after_help = AFTER_HELP)]
pub struct Cli {
    /// Plain-text key=value file supplying defaults for the subcommand's
    /// flags (keys are the long flag names without dashes; flags given on the
    /// command line win).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose head lengths for a label space and report their cost.
    Plan(PlanArgs),
    /// Train a multi-head classifier on an XMLC dataset and write a checkpoint.
    Train(TrainArgs),
    /// Print the top-K labels predicted for every example of a dataset.
    Predict(PredictArgs),
    /// Report accuracy and P@K of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Check that per-head argmaxes combine to the argmax of the Kronecker
    /// product on random positive outputs.
    OracleCheck(OracleArgs),
    /// Run a low-rank theory experiment.
    Theory(TheoryArgs),
}

/// Head layout flags shared by `plan` and `train`.
#[derive(Debug, Args)]
pub struct PlanSpec {
    /// Classification strategy.
    #[arg(long, value_parser = parse_strategy, default_value = "mhp")]
    pub strategy: Strategy,

    /// Number of heads for an automatic plan.
    #[arg(long, default_value_t = 2)]
    pub heads: usize,

    /// Explicit comma-separated head lengths; overrides --heads.
    #[arg(long, value_delimiter = ',', value_name = "L1,L2,...")]
    pub lengths: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Size of the label space.
    #[arg(long)]
    pub classes: usize,

    #[command(flatten)]
    pub plan: PlanSpec,

    /// Feature dimension used for the parameter count.
    #[arg(long, default_value_t = 512)]
    pub feature_dim: usize,

    /// Count one bias per output in the parameter count.
    #[arg(long)]
    pub bias: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training set in XMLC text format.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,

    #[command(flatten)]
    pub plan: PlanSpec,

    /// Label-space size; defaults to the label count in the dataset header.
    #[arg(long)]
    pub classes: Option<usize>,

    /// Width of a learned linear backbone; without it the heads read the
    /// input features directly.
    #[arg(long)]
    pub feature_dim: Option<usize>,

    #[arg(long, default_value_t = 10)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,

    /// Decay the learning rate with a cosine schedule.
    #[arg(long)]
    pub cosine: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Per-head loss; defaults to softmax for single-label data and sigmoid
    /// for multi-label data.
    #[arg(long, value_parser = parse_loss_mode)]
    pub loss: Option<LossMode>,

    /// Beam width for cascade training and inference.
    #[arg(long, default_value_t = 4)]
    pub beam_width: usize,

    /// Heads evaluated per example by the sampling strategy.
    #[arg(long, default_value_t = 1)]
    pub sample_heads: usize,

    /// Batch size for sampling and batched vanilla training.
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,

    /// Comma-separated K values for the train metrics.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub k: Vec<usize>,

    /// Write the final train metrics as name<TAB>value lines.
    #[arg(long, value_name = "PATH")]
    pub emit_metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,

    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Number of labels printed per example.
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,

    /// Write predictions here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,

    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Comma-separated K values; multi-label datasets default to 1,3,5.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,

    /// Write the metrics as name<TAB>value lines.
    #[arg(long, value_name = "PATH")]
    pub emit_metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    /// Largest number of heads drawn (at least 2 heads are used when allowed).
    #[arg(long, default_value_t = 4)]
    pub max_heads: usize,

    /// Largest head length drawn.
    #[arg(long, default_value_t = 8)]
    pub max_length: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Test mode: force a tied maximum into every tenth trial.
    #[arg(long)]
    pub inject_ties: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// Rank-1 bottleneck on Gaussian data, cross-entropy versus Frobenius.
    Fig5,
    /// Softmax perturbation bound, Monte-Carlo.
    Theorem4,
    /// Frobenius restarts and perturb-and-redescend probe on a square toy.
    Saddle,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    pub experiment: Experiment,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the trajectory or report here as well as printing a summary.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// fig5: loss to train with.
    #[arg(long, value_parser = parse_loss_kind, default_value = "ce")]
    pub loss: LossKind,

    /// fig5: examples, features and classes (all equal).
    #[arg(long, default_value_t = 100)]
    pub size: usize,

    /// fig5 and saddle: bottleneck dimension (fig5 default 1, saddle default 2).
    #[arg(long)]
    pub rank: Option<usize>,

    /// fig5: full-batch epochs.
    #[arg(long, default_value_t = 30_000)]
    pub epochs: usize,

    /// fig5: learning rate (saddle: gradient-descent step, default 0.05).
    #[arg(long)]
    pub lr: Option<f64>,

    /// fig5: keep the learning rate constant instead of cosine decay.
    #[arg(long)]
    pub constant_lr: bool,

    /// fig5: optimizer.
    #[arg(long, value_parser = parse_optimizer, default_value = "adam")]
    pub optimizer: Optimizer,

    /// fig5: epochs between trajectory points.
    #[arg(long, default_value_t = 1000)]
    pub record_every: usize,

    /// theorem4: Monte-Carlo trials (saddle: perturbation trials, default 5).
    #[arg(long)]
    pub trials: Option<usize>,

    /// theorem4: perturbation standard deviation (saddle default 0.1).
    #[arg(long)]
    pub scale: Option<f64>,

    /// theorem4: number of classes.
    #[arg(long, default_value_t = 20)]
    pub classes: usize,

    /// theorem4: feature dimension.
    #[arg(long, default_value_t = 10)]
    pub dim: usize,

    /// theorem4: examples per trial.
    #[arg(long, default_value_t = 50)]
    pub examples: usize,

    /// saddle: independent restarts.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: mhe::MheError| e.to_string())
}

fn parse_loss_mode(s: &str) -> Result<LossMode, String> {
    s.parse().map_err(|e: mhe::MheError| e.to_string())
}

fn parse_loss_kind(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: mhe::MheError| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    s.parse().map_err(|e: mhe::MheError| e.to_string())
}
