use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sean_core::segnet::FusionMode;

#[derive(Debug, Parser)]
#[command(name = "sean", version, about = "Symmetry-aware stroke lesion segmentation on CT volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset.
    GenData(GenDataArgs),
    /// Train the unsupervised alignment network.
    TrainAlign(TrainAlignArgs),
    /// Train a segmentation model on aligned volumes.
    TrainSeg(TrainSegArgs),
    /// Score a trained model on a labelled dataset.
    Evaluate(EvaluateArgs),
    /// Segment a single volume.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub num: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with phantom settings; replaces the `phantom` section.
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainAlignArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainSegArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Alignment checkpoint; volumes are used as stored when omitted.
    #[arg(long)]
    pub align: Option<PathBuf>,
    /// One of none, im-l1, ft-l1, ft-cc, sea, sea-self.
    #[arg(long)]
    pub fusion: Option<FusionMode>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seeds both weight initialisation and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub base_width: Option<usize>,
    /// Slab radius T; the model sees 2T+1 slices.
    #[arg(long)]
    pub slab_radius: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub align: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    /// Also write per-volume alignment timings to bench.csv.
    #[arg(long)]
    pub bench: bool,
    /// Write one PNG overlay per case.
    #[arg(long)]
    pub overlays: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Sidecar (.json) of the input volume.
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub align: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// Sidecar path for the output; probabilities and mask are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}
