//! `slt`: synthetic corpora, preprocessing, alignment, training and evaluation.

mod commands;
mod config;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Core(slt_core::Error),
}

impl From<slt_core::Error> for CliError {
    fn from(e: slt_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slt", version, about = "Sign language translation experiments on gloss/text corpora")]
pub struct Cli {
    /// JSON config file with dotted keys, e.g. {"train.epochs": 5}.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (default 42).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with controlled homonym pairs.
    Synth(SynthArgs),
    /// Build body-part stream variants of a corpus.
    Prepare(PrepareArgs),
    /// Add mirrored and contrast-adjusted copies of every record.
    Augment(AugmentArgs),
    /// Match gloss sequences to candidate (gloss, text) pairs.
    Align(AlignArgs),
    /// Train a joint recognition/translation model.
    Train(TrainArgs),
    /// Continue training from a checkpoint, reinitializing mismatched layers.
    Finetune(FinetuneArgs),
    /// Decode a corpus with a checkpoint and score the translations.
    Evaluate(EvaluateArgs),
    /// Count homonym glosses in a corpus.
    Homonyms(HomonymsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of records.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Number of homonym pairs (0 to 2).
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Uniform pixel noise amplitude.
    #[arg(long)]
    pub noise: Option<f32>,
    #[arg(long)]
    pub frames_per_gloss: Option<usize>,
    #[arg(long)]
    pub signers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Input corpus manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// baseline, mouth_full, hands_full or mouth_hands_full.
    #[arg(long)]
    pub variant: Option<String>,
    /// Crop box width in pixels (default: a quarter of the frame).
    #[arg(long)]
    pub box_width: Option<usize>,
    #[arg(long)]
    pub box_height: Option<usize>,
    /// Vertical offset from the nose to the mouth centre.
    #[arg(long, allow_negative_numbers = true)]
    pub mouth_offset: Option<i64>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Split 70/20/10 first and augment only the training part.
    #[arg(long)]
    pub split_first: bool,
    #[arg(long)]
    pub contrast_factor: Option<f32>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// One gloss sequence per line.
    #[arg(long, value_name = "PATH")]
    pub glosses: Option<PathBuf>,
    /// Candidate pairs, one `gloss<TAB>text` per line.
    #[arg(long, value_name = "PATH")]
    pub candidates: Option<PathBuf>,
    /// wordset or bleu.
    #[arg(long)]
    pub method: Option<String>,
    /// Placeholder substitutions, one `placeholder<TAB>replacement` per line.
    #[arg(long, value_name = "PATH")]
    pub subst: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HpArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lambda_rec: Option<f64>,
    #[arg(long)]
    pub lambda_trans: Option<f64>,
    /// Accept hyperparameters outside the explored grid.
    #[arg(long)]
    pub allow_offgrid: bool,
    /// Record wall-clock seconds per epoch in the log (makes logs non-reproducible).
    #[arg(long)]
    pub record_timing: bool,
    /// Keep layers frozen until an epoch: `EPOCH:PREFIX[,PREFIX...]`. Repeatable.
    #[arg(long, value_name = "SPEC")]
    pub freeze: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training corpus manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Development corpus manifest used for model selection.
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    #[command(flatten)]
    pub hp: HpArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pre-trained checkpoint.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Reinitialize parameters under this name prefix. Repeatable.
    #[arg(long, value_name = "PREFIX")]
    pub reinit: Vec<String>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Corpus to decode and score.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Beam width; 1 decodes greedily.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HomonymsArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Lexicon, one `GLOSS<TAB>meaning|meaning...` per line.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
