//! `patchaudit`: audit an image-patch corpus for color, compression and
//! clipping shortcuts, train shallow baselines on it and stress them.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod repro;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "patchaudit", version, about = "Dataset shortcut audit for image-patch corpora")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Master seed for every random stream [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    /// Abort on the first unreadable image instead of skipping it
    #[arg(long, global = true)]
    pub strict: bool,
}

impl Common {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan a class-per-directory tree into a manifest CSV
    Scan(ScanArgs),
    /// Extract color features for every manifest entry
    Featurize(FeaturizeArgs),
    /// Color, compression and clipping audit; writes a JSON report and plot data
    Audit(AuditArgs),
    /// Train a classifier on the training rows of a feature CSV
    Train(TrainArgs),
    /// Evaluate a model on the test rows of a feature CSV
    Eval(EvalArgs),
    /// Robustness sweep: JPEG re-encoding and hue rotation of test images
    Perturb(PerturbArgs),
    /// Generate a synthetic corpus with planted shortcuts
    Synth(SynthArgs),
    /// End to end: scan, featurize, train mean-RGB and histogram forests, evaluate
    Repro(ReproArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for patchaudit::corpus::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Test => Self::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExtractorArg {
    MeanRgb,
    Histogram,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    /// Corpus root with one subdirectory per class
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Manifest CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ExtractorOpts {
    #[arg(long, value_enum, default_value = "histogram")]
    pub extractor: ExtractorArg,
    /// Histogram bins per channel
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub bins: u32,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub extractor: ExtractorOpts,
    /// Feature CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Training manifest (entries of other splits are ignored)
    #[arg(long)]
    pub train: PathBuf,
    /// Test manifest, enables train/test shift
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// JSON report to write
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for plot-data CSVs
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub bins: u32,
    /// Fraction of 255-valued pixels in any channel that flags an image
    #[arg(long, default_value_t = 0.05)]
    pub saturation_threshold: f64,
    /// JPEG block size for the blockiness score
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(2..=256))]
    pub grid: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Forest,
    Softmax,
}

#[derive(Args, Debug, Clone)]
pub struct ForestOpts {
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    pub trees: u32,
    /// Maximum tree depth [default: unlimited]
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub min_samples_leaf: u32,
    /// Features tried per split [default: round(sqrt(D))]
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub mtry: Option<u32>,
    /// Grow every tree on the full training set
    #[arg(long)]
    pub no_bootstrap: bool,
}

impl ForestOpts {
    pub fn params(&self) -> patchaudit::classify::ForestParams {
        patchaudit::classify::ForestParams {
            n_trees: self.trees as usize,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf as usize,
            features_per_split: self.mtry.map(|m| m as usize),
            bootstrap: !self.no_bootstrap,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "forest")]
    pub kind: ModelKind,
    #[command(flatten)]
    pub forest: ForestOpts,
    /// Softmax probe learning rate
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Softmax probe epochs
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Softmax probe L2 penalty
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Feed raw features to the softmax probe
    #[arg(long)]
    pub no_standardize: bool,
    /// Model JSON to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Rows to evaluate on
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Per-class CSV (class,support,correct,recall)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confusion matrix CSV (true,predicted,count)
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Manifest whose test entries are perturbed
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature extractor [default: the one the model was trained on]
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorArg>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub bins: Option<u32>,
    /// Perturbation spec JSON ({"jpeg_qualities": [...], "hue_deltas_degrees": [...]})
    #[arg(long, conflicts_with_all = ["jpeg", "hue"])]
    pub spec: Option<PathBuf>,
    /// JPEG qualities [default: 80,60,40,20]
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=100))]
    pub jpeg: Option<Vec<u8>>,
    /// Hue rotations in degrees [default: -10,10,-20,20]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub hue: Option<Vec<f64>>,
    /// Sweep CSV to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    ColorSignatures,
    IdenticalMeans,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Synthetic corpus spec JSON
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in nine-class spec
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, default_value_t = 500, requires = "preset")]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 100, requires = "preset")]
    pub test_per_class: usize,
    /// Square image side
    #[arg(long, default_value_t = 224, requires = "preset", value_parser = clap::value_parser!(u32).range(1..=65535))]
    pub size: u32,
    /// Output root
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproArgs {
    /// Dataset root containing train/ and test/, or NCT-CRC-HE-100K/ and CRC-VAL-HE-7K/
    #[arg(long, required_unless_present_all = ["train", "test"])]
    pub root: Option<PathBuf>,
    /// Training tree, overrides the layout found under --root
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test tree, overrides the layout found under --root
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub bins: u32,
    #[command(flatten)]
    pub forest: ForestOpts,
    /// Directory for manifest, feature CSVs, models and report
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: could not start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    let common = cli.common;
    let result = match cli.command {
        Command::Scan(a) => commands::scan(&common, a),
        Command::Featurize(a) => commands::featurize(&common, a),
        Command::Audit(a) => commands::audit(&common, a),
        Command::Train(a) => commands::train(&common, a),
        Command::Eval(a) => commands::eval(&common, a),
        Command::Perturb(a) => commands::perturb(&common, a),
        Command::Synth(a) => commands::synth(&common, a),
        Command::Repro(a) => repro::run(&common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Reports a usage problem found after parsing and exits with status 2.
pub fn usage_error(message: impl std::fmt::Display) -> ! {
    Cli::command().error(clap::error::ErrorKind::ValueValidation, message).exit()
}
