use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eqrep_core::audio::{PartialCount, DEFAULT_SAMPLE_RATE};
use eqrep_core::eq::EqSetting;
use eqrep_core::models::{ModelKind, Optimizer};

/// Predict the five EQ band gains applied to a sound, from synthetic corpus
/// to trained model.
#[derive(Debug, Parser)]
#[command(name = "eqrep", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Sample rate every input and output must use (Hz).
    #[arg(long, global = true, default_value_t = DEFAULT_SAMPLE_RATE)]
    pub sample_rate: u32,

    /// STFT frame length in samples (power of two).
    #[arg(long, global = true, default_value_t = 2048)]
    pub frame_size: usize,

    /// STFT hop in samples.
    #[arg(long, global = true, default_value_t = 512)]
    pub hop_size: usize,

    /// Seed for subsampling, splits and model initialization.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, env = "EQREP_OUT", default_value = "eqrep-out")]
    pub out: PathBuf,

    /// Worker threads for dataset generation and forest training (1 runs sequentially).
    #[arg(long, global = true, value_parser = parse_jobs)]
    pub jobs: Option<usize>,

    /// Print progress to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic note corpus as WAV files plus corpus.json.
    Synth(SynthArgs),
    /// Apply EQ settings to a corpus and extract features into a manifest.
    Dataset(DatasetArgs),
    /// Extract the 17 features from WAV files.
    Extract(ExtractArgs),
    /// Train a model on a manifest (80/20 split) and write an artifact.
    Train(TrainArgs),
    /// Predict band gains for WAV files with a trained artifact.
    Predict(PredictArgs),
    /// Score an artifact on a manifest split; writes report and scatter files.
    Eval(EvalArgs),
    /// Run all four experiments and check the expected outcomes.
    Reproduce(ReproduceArgs),
    /// Print the combined magnitude response of an EQ setting as CSV.
    Response(ResponseArgs),
}

fn parse_jobs(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("{s:?} is not a positive thread count")),
    }
}

/// Comma-separated pitch labels, validated at parse time.
#[derive(Debug, Clone)]
pub struct PitchList(pub Vec<String>);

fn parse_pitches(s: &str) -> Result<PitchList, String> {
    let list: Vec<String> = s
        .split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    if list.is_empty() {
        return Err("empty pitch list".into());
    }
    for p in &list {
        eqrep_core::audio::parse_pitch(p).map_err(|e| e.to_string())?;
    }
    Ok(PitchList(list))
}

fn parse_partials(s: &str) -> Result<PartialCount, String> {
    s.parse().map_err(|e: eqrep_core::Error| e.to_string())
}

fn parse_gains(s: &str) -> Result<EqSetting, String> {
    let gains = s
        .split(',')
        .map(|g| g.trim().parse::<f64>().map_err(|_| format!("{g:?} is not a number")))
        .collect::<Result<Vec<f64>, String>>()?;
    EqSetting::from_slice(&gains).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Comma-separated pitch labels (default: C0,G0,...,C7,G7).
    #[arg(long, value_parser = parse_pitches)]
    pub pitches: Option<PitchList>,

    /// Harmonics per note: "default" (20, capped below Nyquist), "full" or a count.
    #[arg(long, default_value = "default", value_parser = parse_partials)]
    pub partials: PartialCount,

    /// Directory for the WAVs (default: <out>/corpus).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetMode {
    Single,
    Multi,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long, value_enum)]
    pub mode: DatasetMode,

    /// Gain grid step in dB; must divide 12 (default: 1 single, 4 multi).
    #[arg(long)]
    pub step: Option<u32>,

    /// Random subset size (multi mode defaults to 3000).
    #[arg(long, conflicts_with = "full")]
    pub limit: Option<usize>,

    /// Use every (note, setting) pair.
    #[arg(long)]
    pub full: bool,

    /// Directory of corpus WAVs (default: <out>/corpus).
    #[arg(long)]
    pub corpus: Option<PathBuf>,

    /// Manifest path (default: <out>/dataset_<mode>.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Also write the manifest as CSV next to the JSON.
    #[arg(long)]
    pub csv: bool,

    /// Write every EQ-processed buffer as WAV into this directory.
    #[arg(long)]
    pub keep_audio: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(required = true)]
    pub wavs: Vec<PathBuf>,

    /// CSV path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Linear,
    Forest,
    Mlp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Linear => ModelKind::Linear,
            ModelArg::Forest => ModelKind::Forest,
            ModelArg::Mlp => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

impl From<OptimizerArg> for Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::SgdMomentum,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,

    #[arg(long)]
    pub manifest: PathBuf,

    /// Artifact path (default: <out>/model_<kind>.json).
    #[arg(long)]
    pub artifact: Option<PathBuf>,

    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,

    /// MLP hidden width.
    #[arg(long)]
    pub hidden_dim: Option<usize>,

    /// MLP epochs.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// MLP minibatch size.
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// MLP learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,

    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,

    /// Forest size.
    #[arg(long)]
    pub trees: Option<usize>,

    /// Forest minimum leaf size.
    #[arg(long)]
    pub leaf_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model artifact JSON.
    #[arg(long)]
    pub model: PathBuf,

    #[arg(required = true)]
    pub wavs: Vec<PathBuf>,

    /// CSV path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    /// The held-out side of the seeded split.
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model artifact JSON.
    #[arg(long)]
    pub model: PathBuf,

    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,

    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,

    /// Label used in the report and output file names.
    #[arg(long, default_value = "eval")]
    pub experiment_id: String,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Comma-separated corpus pitches (default: the single reference note).
    #[arg(long, value_parser = parse_pitches)]
    pub pitches: Option<PitchList>,

    /// Harmonics per note ("default", "full" or a count).
    #[arg(long, default_value = "full", value_parser = parse_partials)]
    pub partials: PartialCount,

    /// Multi-band subset size.
    #[arg(long, default_value_t = eqrep_core::eval::DEFAULT_MULTI_BAND_LIMIT, conflicts_with = "full")]
    pub limit: usize,

    /// Use all 16807 multi-band settings per note.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct ResponseArgs {
    /// Five comma-separated gains in dB, e.g. 12,0,0,-3,0.
    #[arg(long, value_parser = parse_gains, allow_hyphen_values = true)]
    pub gains: EqSetting,

    #[arg(long, default_value_t = 200)]
    pub points: usize,

    #[arg(long, default_value_t = 20.0)]
    pub fmin: f64,

    #[arg(long, default_value_t = 20_000.0)]
    pub fmax: f64,

    /// CSV path (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}
