//! `svb`: file-to-file pipeline for the svbackend toolkit.
//!
//! Data goes to `--output` (or stdout when omitted); logs go to stderr.
//! Failures print a single `ERROR <Code>: <detail>` line and exit with
//! 1 (usage), 2 (format) or 3 (numeric).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use svbackend::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(name = "svb", version, about = "Speaker verification back-end pipeline", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

/// Shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// `key = value` file of defaults for this subcommand's flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Sample a speaker-labelled archive from the two-covariance model
    Synth(SynthArgs),
    /// Apply length normalization, centering and LDA stages in flag order
    Preprocess(PreprocessArgs),
    /// Fit a PLDA model by EM
    TrainPlda(TrainPldaArgs),
    /// Score a trial list with cosine or PLDA
    Score(ScoreArgs),
    /// Compute EER and minDCF from a labelled score file
    Evaluate(EvaluateArgs),
    /// Per-dimension between/within variances of a model or labelled archive
    Diagnose(DiagnoseArgs),
    /// Train the toy linear encoder and write the per-epoch history
    ToyTrain(ToyTrainArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "between"])))]
pub struct SynthArgs {
    /// Covariance preset: conventional or large-margin
    #[arg(long, conflicts_with_all = ["between", "within"])]
    pub preset: Option<String>,
    /// Isotropic between-speaker variance (instead of a preset)
    #[arg(long, requires = "within")]
    pub between: Option<f64>,
    /// Isotropic within-speaker variance (instead of a preset)
    #[arg(long, requires = "between")]
    pub within: Option<f64>,
    /// Embedding dimension
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 200)]
    pub speakers: usize,
    /// Utterances per speaker
    #[arg(long, default_value_t = 10)]
    pub utts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Archive path (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the binary archive format instead of text
    #[arg(long)]
    pub binary: bool,
    /// Also write a balanced labelled trial list here
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[arg(long, default_value_t = 2500, requires = "trials")]
    pub n_target: usize,
    #[arg(long, default_value_t = 2500, requires = "trials")]
    pub n_nontarget: usize,
    /// Seed of the trial sampler (defaults to --seed)
    #[arg(long, requires = "trials")]
    pub trial_seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Input archive (text or binary)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub binary: bool,
    /// Stage: scale every vector to norm √d
    #[arg(long, action = clap::ArgAction::Append, num_args = 0, default_missing_value = "true")]
    pub ln: Vec<bool>,
    /// Stage: subtract the archive mean
    #[arg(long, action = clap::ArgAction::Append, num_args = 0, default_missing_value = "true")]
    pub center: Vec<bool>,
    /// Stage: fit and apply a k-dimensional LDA (needs speaker labels)
    #[arg(long, value_name = "K", action = clap::ArgAction::Append)]
    pub lda: Vec<usize>,
    /// Stage: like --lda with a diagonal within-class scatter
    #[arg(long, value_name = "K", action = clap::ArgAction::Append)]
    pub lda_diag: Vec<usize>,
    /// Stage: apply a saved projection
    #[arg(long, value_name = "PATH", action = clap::ArgAction::Append)]
    pub projection: Vec<PathBuf>,
    /// Save the fitted projection (exactly one LDA stage required)
    #[arg(long, value_name = "PATH")]
    pub save_projection: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TrainPldaArgs {
    /// Speaker-labelled training archive
    #[arg(long)]
    pub input: PathBuf,
    /// Model path (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Constrain the within-speaker covariance to be diagonal
    #[arg(long)]
    pub diag: bool,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the per-iteration log-likelihood CSV here
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Cosine,
    Plda,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long, value_enum, default_value_t = Backend::Cosine)]
    pub backend: Backend,
    /// PLDA model (required with --backend plda)
    #[arg(long, required_if_eq("backend", "plda"))]
    pub model: Option<PathBuf>,
    /// Trial list: `enroll test [target|nontarget]` per line
    #[arg(long)]
    pub trials: PathBuf,
    /// Archive holding every enroll and test id
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Labelled score file
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub p_target: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_miss: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_fa: f64,
    /// Also write the DET operating points as CSV
    #[arg(long)]
    pub det: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["model", "labeled_archive"])))]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub labeled_archive: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Affine softmax with biases
    Softmax,
    /// Normalized softmax without margin
    NormSoftmax,
    /// Additive cosine margin (m3)
    Am,
    /// Additive angular margin (m2)
    Aam,
    /// Multiplicative angular margin (m1)
    A,
}

#[derive(Args, Debug)]
pub struct ToyTrainArgs {
    #[arg(long, value_enum, default_value_t = LossKind::Aam)]
    pub loss: LossKind,
    /// Logit scale
    #[arg(long, default_value_t = 30.0)]
    pub s: f64,
    /// Multiplicative angular margin (default 2 for `a`, else 1)
    #[arg(long)]
    pub m1: Option<f64>,
    /// Additive angular margin (default 0.2 for `aam`, else 0)
    #[arg(long)]
    pub m2: Option<f64>,
    /// Additive cosine margin (default 0.2 for `am`, else 0)
    #[arg(long)]
    pub m3: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Input dimension of the toy points
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 2)]
    pub embed_dim: usize,
    /// Seed of the toy data (defaults to --seed)
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::from(e))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn report(f: &Failure) -> u8 {
    match f {
        Failure::Usage(msg) => {
            eprintln!("ERROR Usage: {}", one_line(msg));
            1
        }
        Failure::Core(e) => {
            eprintln!("ERROR {}: {}", e.code(), one_line(&e.to_string()));
            match e.class() {
                ErrorClass::Format => 2,
                ErrorClass::Numeric => 3,
            }
        }
    }
}

fn run() -> Result<(), Failure> {
    let cmd = Cli::command();
    let args = config::expand(&cmd, std::env::args().collect()).map_err(|e| Failure::Usage(e.0))?;
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
            }
            let text = e.to_string();
            let head: Vec<&str> = text.lines().take_while(|l| !l.starts_with("Usage:")).collect();
            return Err(Failure::Usage(head.join(" ").trim_start_matches("error: ").to_string()));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Failure::Usage(e.to_string()))?;
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    match cli.cmd {
        Cmd::Synth(a) => commands::synth(&a),
        Cmd::Preprocess(a) => commands::preprocess(&a, sub),
        Cmd::TrainPlda(a) => commands::train_plda(&a),
        Cmd::Score(a) => commands::score(&a),
        Cmd::Evaluate(a) => commands::evaluate(&a),
        Cmd::Diagnose(a) => commands::diagnose(&a),
        Cmd::ToyTrain(a) => commands::toy_train(&a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => ExitCode::from(report(&f)),
    }
}
