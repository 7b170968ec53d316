use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tsception::baseline::FeatureKind;
use tsception::data::SplitMode;
use tsception::model::VariantKind;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "tsception", version = env!("TSCEPTION_GIT_DESCRIBE"), about = "EEG arousal classification toolkit")]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train one fold of one subject and save the model.
    Train(TrainCmd),
    /// Leave-one-session-out cross-validation over every subject.
    Crossval(CrossvalCmd),
    /// Extract RP/DE features for every window into a CSV file.
    Features(FeaturesArgs),
    /// Cross-validate the linear baseline on a feature CSV.
    Baseline(BaselineArgs),
    /// Finite-difference gradient check of every layer.
    Gradcheck(GradcheckArgs),
    /// Describe a model variant, a checkpoint or a dataset.
    Inspect(InspectArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Crossval(_) => "crossval",
            Command::Features(_) => "features",
            Command::Baseline(_) => "baseline",
            Command::Gradcheck(_) => "gradcheck",
            Command::Inspect(_) => "inspect",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 18)]
    pub subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub sessions: usize,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 256.0)]
    pub fs: f64,
    /// Recording length in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Amplitude ratio of the class signal to the background, squared.
    #[arg(long, default_value_t = 1.0)]
    pub snr: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty directory, replacing its recordings.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArg {
    /// Dataset directory.
    #[arg(long, env = "TSCEPTION_DATA")]
    pub data: PathBuf,
}

/// Optimization, windowing and split settings shared by `train` and
/// `crossval`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = VariantKind::TSception)]
    pub model: VariantKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// L1 penalty weight.
    #[arg(long, default_value_t = 1e-6)]
    pub lambda: f64,
    #[arg(long, default_value_t = 4)]
    pub patience: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,
    /// Window length in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub window: f64,
    /// Hop between windows in samples.
    #[arg(long, default_value_t = 25)]
    pub step: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = SplitMode::Random)]
    pub split: SplitMode,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArg,
    #[arg(long)]
    pub subject: String,
    /// Index of the held-out session.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CrossvalCmd {
    #[command(flatten)]
    pub data: DataArg,
    /// Restrict to these subject ids.
    #[arg(long, value_delimiter = ',')]
    pub subjects: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub subjects: Vec<String>,
    #[arg(long, default_value_t = 4.0)]
    pub window: f64,
    #[arg(long, default_value_t = 25)]
    pub step: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    /// Feature CSV written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = FeatureKind::De)]
    pub kind: FeatureKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// L2 penalty weight.
    #[arg(long, default_value_t = 1e-3)]
    pub reg: f64,
    /// Label permutations for the null distribution; 0 skips it.
    #[arg(long, default_value_t = 100)]
    pub permutations: usize,
    /// Permute the training labels of the main run too.
    #[arg(long)]
    pub shuffle_labels: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectedFault {
    /// Scale the convolution weight gradient by 1.01.
    Conv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to check, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Corrupt one analytic gradient; the check must then fail.
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<InjectedFault>,
    /// Directory for the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(required = false, multiple = false)]
pub struct InspectArgs {
    /// Print layers and parameter counts of a variant.
    #[arg(long)]
    pub model: Option<VariantKind>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Summarize a dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
}
