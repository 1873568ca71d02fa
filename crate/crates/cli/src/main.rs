use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Language identification for Perso-Arabic scripts: corpus preparation,
/// noise synthesis, training, identification and benchmarking.
#[derive(Parser, Debug)]
#[command(name = "persolid", version, about)]
pub struct Cli {
    /// Directory with `profiles/*.profile` and `mappings/*.tsv`; the
    /// built-in configuration is used when unset.
    #[arg(long, global = true, env = "PERSOLID_CONFIG_DIR")]
    pub config_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Clean raw `<lang>.txt` files into one sentence per line.
    Normalize(NormalizeArgs),
    /// Write noisy copies of a clean corpus at several noise levels.
    Synthesize(SynthesizeArgs),
    /// Split, upsample and assemble the CLEAN/NOISY/ALL/MERGED datasets.
    Assemble(AssembleArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Label each input line with a language and its probability.
    Identify(IdentifyArgs),
    /// Score models on test datasets and write report tables.
    Benchmark(BenchmarkArgs),
    /// Detect confused language clusters.
    Clusters(ClustersArgs),
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    /// Directory of raw `<lang>.txt` files.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Minimum non-space characters per sentence.
    #[arg(long, default_value_t = 3)]
    pub min_chars: usize,
    /// Minimum share of letters in the language inventory; 0 disables.
    #[arg(long, default_value_t = 0.9)]
    pub min_coverage: f64,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    /// Directory of clean `<lang>.txt` files.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Receives one `<level>/<lang>.txt` per level and language.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
    pub levels: Vec<u32>,
    #[arg(long)]
    pub seed: u64,
    /// Accept levels off the 20/40/60/80/100 grid.
    #[arg(long)]
    pub allow_any_level: bool,
    /// Always map towards this dominant language instead of a random one.
    #[arg(long)]
    pub dominant: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AllPolicyArg {
    /// One noisy copy per sentence at a random level.
    One,
    /// Every noisy copy at every level.
    Union,
}

#[derive(Args, Debug)]
pub struct AssembleArgs {
    /// Directory of clean `<lang>.txt` files.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Receives `train/<MODE>.tsv`, `test/<MODE>.tsv` and `manifest.tsv`.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Multiply every split size, for small experiments.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, value_enum, default_value_t = AllPolicyArg::One)]
    pub all: AllPolicyArg,
    /// Keep duplicate sentences.
    #[arg(long)]
    pub keep_duplicates: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Mnb,
    Mlp,
    Subword,
    Hierarchical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Softmax,
    Hs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset (`lang<TAB>level<TAB>text` lines).
    #[arg(long, short)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Where to write the model file.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Classifier used for the root and experts of a hierarchical model.
    #[arg(long, value_enum, default_value_t = KindArg::Subword)]
    pub base: KindArg,
    /// `auto`, `reference` (the three shipped clusters), or a cluster file.
    #[arg(long, default_value = "auto")]
    pub clusters: String,
    /// Confusion threshold for automatic cluster detection.
    #[arg(long, default_value_t = persolid::hier::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

/// Overrides of the per-kind defaults.
#[derive(Args, Debug, Default)]
pub struct HyperArgs {
    /// Embedding size (subword).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Learning rate (subword, mlp).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs (subword) or maximum epochs (mlp).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output layer (subword).
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Hidden units (mlp).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Mini-batch size (mlp).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Character n-gram range, e.g. `2-4`.
    #[arg(long)]
    pub ngrams: Option<String>,
}

#[derive(Args, Debug)]
pub struct IdentifyArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Input file; standard input when absent.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// `name=path` of a model file; repeatable.
    #[arg(long = "model", value_name = "NAME=PATH")]
    pub models: Vec<String>,
    /// `name=command` of an external identifier speaking the line
    /// protocol; repeatable.
    #[arg(long = "external", value_name = "NAME=COMMAND")]
    pub externals: Vec<String>,
    /// Directory of `<MODE>.tsv` test files.
    #[arg(long, short)]
    pub data: PathBuf,
    /// Modes to score; every file present in the data directory by default.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<String>,
    /// `root,hier` model names to compare for significance.
    #[arg(long, value_delimiter = ',')]
    pub pair: Vec<String>,
    #[arg(long, default_value_t = persolid::eval::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Receives `summary`, `significance` and `per_language` tables.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value = "tsv")]
    pub format: String,
}

#[derive(Args, Debug)]
pub struct ClustersArgs {
    /// Model whose (root) confusions are measured.
    #[arg(long, short, conflicts_with = "confusion", requires = "data")]
    pub model: Option<PathBuf>,
    /// Dataset to measure confusions on.
    #[arg(long, short)]
    pub data: Option<PathBuf>,
    /// Precomputed confusion matrix TSV.
    #[arg(long, required_unless_present = "model")]
    pub confusion: Option<PathBuf>,
    #[arg(long, default_value_t = persolid::hier::DEFAULT_TAU)]
    pub tau: f64,
    /// Also write the measured confusion matrix here.
    #[arg(long)]
    pub write_confusion: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
