//! `hlpd`: train, detect, evaluate, build datasets, generate prompts and
//! humanize, all from one binary.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Endpoint(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Endpoint(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Endpoint(m) => m,
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "hlpd", version, about = "Human-preference-aligned machine-revised text detection")]
pub struct Cli {
    /// Worker threads for scoring and candidate evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Use offline mock endpoints; no network access.
    #[arg(long, global = true)]
    pub mock: bool,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preference-train a scoring model on a pair corpus.
    Train(TrainArgs),
    /// Score texts and label them human or machine.
    Detect(DetectArgs),
    /// AUROC with confidence intervals over runs.
    Eval(EvalArgs),
    /// Build a preference-pair corpus from human documents.
    BuildDataset(BuildArgs),
    /// Generate a pool of adversarial stage-1 prompts.
    GenPrompts(GenArgs),
    /// Run the perturb-and-select humanization attack.
    Humanize(HumanizeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Detect(_) => "detect",
            Command::Eval(_) => "eval",
            Command::BuildDataset(_) => "build-dataset",
            Command::GenPrompts(_) => "gen-prompts",
            Command::Humanize(_) => "humanize",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SignArg {
    Hlp,
    FastDetect,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Use this constant beta instead of the variance-aware schedule.
    #[arg(long)]
    pub fixed_beta: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub context: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub perturb: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sign: Option<SignArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// `analytic` or `mc:<samples>`.
    #[arg(long)]
    pub estimator: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labelled score dumps from `detect`, one per run.
    #[arg(long, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub corpus_a: Option<PathBuf>,
    #[arg(long)]
    pub corpus_b: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_heldout: Option<usize>,
    #[arg(long)]
    pub no_humanize: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub documents: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    /// Endpoint registry (model id to base URL and token variable).
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub stage1_model: Option<String>,
    #[arg(long)]
    pub stage2_model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HumanizeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub perturb: Option<PathBuf>,
    #[arg(long)]
    pub perturb_corpus: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
