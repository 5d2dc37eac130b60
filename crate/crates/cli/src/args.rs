use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vipose", version, about = "View-invariant 3D pose lifting and refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Skeleton topology file (TOML). Falls back to `topology.toml` in the
    /// config directory, then to the built-in 17-joint skeleton.
    #[arg(long, global = true)]
    pub topology: Option<PathBuf>,

    /// Where to write the run manifest. Defaults to a file next to the outputs.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate paired synthetic 2D/3D pose files with scene metadata.
    Synth(SynthArgs),
    /// Map 3D poses into their canonical view, or invert with a sidecar.
    Transform(TransformArgs),
    /// Train one pipeline scheme.
    Train(TrainArgs),
    /// Evaluate a trained pipeline or a prediction file.
    Eval(EvalArgs),
    /// Train and evaluate the full scheme ladder on the same data and seed.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub count: usize,
    /// Half-width of the uniform view angles about each axis (radians).
    #[arg(long, default_value_t = PI)]
    pub spread: f64,
    /// Joint noise sigma (mm).
    #[arg(long, default_value_t = 5.0)]
    pub noise: f64,
    /// Horizontal camera rig instead of uniform views; `--spread` then
    /// bounds pitch and roll only.
    #[arg(long)]
    pub rig: bool,
    /// Write 3D poses as JSON lines instead of CSV.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// 3D pose file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Transform sidecar: written when canonicalizing, read with `--invert`.
    #[arg(long)]
    pub sidecar: PathBuf,
    /// Apply the inverse of the sidecar transforms to `--input`.
    #[arg(long)]
    pub invert: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// Training config (TOML). Falls back to `train.toml` in the config directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub generator_lr: Option<f64>,
    #[arg(long)]
    pub discriminator_lr: Option<f64>,
    /// Never query or update the discriminator.
    #[arg(long)]
    pub no_adversarial: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_2d: PathBuf,
    #[arg(long)]
    pub data_3d: PathBuf,
    /// Optional held-out pair evaluated after every joint epoch.
    #[arg(long, requires = "eval_3d")]
    pub eval_2d: Option<PathBuf>,
    #[arg(long, requires = "eval_2d")]
    pub eval_3d: Option<PathBuf>,
    #[arg(long, default_value = "B+VI-HC-VID")]
    pub scheme: String,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "predictions"])))]
pub struct EvalArgs {
    /// Directory written by `train`.
    #[arg(long, requires = "data_2d")]
    pub model: Option<PathBuf>,
    /// 3D prediction file, matched to the ground truth by frame id.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub data_2d: Option<PathBuf>,
    /// Ground-truth 3D poses.
    #[arg(long)]
    pub data_3d: PathBuf,
    /// Evaluate absolute coordinates instead of root-relative ones.
    #[arg(long)]
    pub no_root_align: bool,
    /// Report path (JSON); a fixed-column table goes next to it as `.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitKind {
    /// Last `--test-count` frames are the test set.
    Ids,
    /// One view bucket is held out.
    Views,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// 2D input file; without data files a synthetic set is generated.
    #[arg(long, requires = "data_3d")]
    pub data_2d: Option<PathBuf>,
    #[arg(long, requires = "data_2d")]
    pub data_3d: Option<PathBuf>,
    /// Scene metadata, needed for `--split views` on file data.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub train_count: usize,
    #[arg(long, default_value_t = 500)]
    pub test_count: usize,
    #[arg(long, default_value_t = PI)]
    pub spread: f64,
    #[arg(long, default_value_t = 5.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, value_enum, default_value_t = SplitKind::Ids)]
    pub split: SplitKind,
    /// View bucket held out by `--split views`.
    #[arg(long, default_value_t = 3)]
    pub test_view: usize,
    /// Comma-separated scheme names; defaults to the whole ladder.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<String>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub out_dir: PathBuf,
}
