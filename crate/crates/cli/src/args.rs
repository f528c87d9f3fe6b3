use std::path::PathBuf;

use bs4nn::Preset;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bs4nn", version, about = "Binarized single-spike spiking neural networks")]
pub struct Cli {
    /// Worker threads for evaluation (default: all cores). Training is always sequential.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write checkpoint, deployment model and history.
    Train(Box<TrainArgs>),
    /// Evaluate a model: accuracy, confusion, firing times, spike counts.
    Eval(EvalArgs),
    /// Accuracy under uniform pixel jitter noise.
    Noise(NoiseArgs),
    /// Accuracy and response time over a range of thresholds.
    Sweep(SweepArgs),
    /// Print storage sizes and weight sign statistics; optionally export weight maps.
    Inspect(InspectArgs),
    /// Dump the spike times of one image as CSV.
    Encode(EncodeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Mnist,
    Fashion,
    FashionDeep,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Mnist => Preset::Mnist,
            PresetArg::Fashion => Preset::Fashion,
            PresetArg::FashionDeep => Preset::FashionDeep,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainData {
    #[arg(long)]
    pub train_images: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long, requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    /// Use only the first N training samples.
    #[arg(long)]
    pub limit_train: Option<usize>,
    /// Use only the first N test samples.
    #[arg(long)]
    pub limit_test: Option<usize>,
    /// Carve this fraction of the training set off as a held-out set, after shuffling with the seed.
    #[arg(long)]
    pub holdout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "mnist")]
    pub preset: PresetArg,
    #[command(flatten)]
    pub data: TrainData,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, e.g. `600` or `600,600`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Threshold, one value for all layers or one per layer.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f32>>,
    /// Initial scaling factor, one value for all layers or one per layer.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f32>>,
    /// Initial weight range `low:high`, one for all layers or one per layer.
    #[arg(long, value_delimiter = ',')]
    pub init: Option<Vec<String>>,
    #[arg(long)]
    pub t_max: Option<u32>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub gamma: Option<u32>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub decay_fraction: Option<f64>,
    #[arg(long)]
    pub decay_period: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Simulation window the model was trained with.
    #[arg(long, default_value_t = 256)]
    pub t_max: u32,
}

#[derive(Debug, Args)]
pub struct TestData {
    #[arg(long)]
    pub test_images: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    #[arg(long)]
    pub limit_test: Option<usize>,
    /// Attach Fashion-MNIST class names to reports.
    #[arg(long)]
    pub fashion: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: TestData,
    /// Directory for report CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report accuracy with real-valued proxies in place of binary synapses.
    #[arg(long)]
    pub proxy: bool,
    /// Write the output membrane potentials of this test sample.
    #[arg(long)]
    pub trace_index: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: TestData,
    /// Jitter levels as fractions of the maximum intensity.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: TestData,
    /// Inclusive range `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "0:200:5")]
    pub theta: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Export first-layer weight maps into this directory.
    #[arg(long)]
    pub maps_out: Option<PathBuf>,
    /// How many hidden neurons to export (chosen with the seed).
    #[arg(long, default_value_t = 16)]
    pub maps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 28)]
    pub width: usize,
    #[arg(long, default_value_t = 28)]
    pub height: usize,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// IDX image file.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 256)]
    pub t_max: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
