//! `nszsl` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "nszsl",
    version,
    about = "Zero-shot classification from noisy class documents"
)]
struct Cli {
    /// Worker threads for cross-validation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Progress messages on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a vocabulary from a directory of class documents.
    Vocab(VocabArgs),
    /// Turn class documents into a document matrix over a vocabulary.
    Featurize(FeaturizeArgs),
    /// Train one model at fixed hyperparameters.
    Train(TrainArgs),
    /// Grid-search hyperparameters with class-wise cross-validation.
    Cv(CvArgs),
    /// Score one or more models on the unseen classes.
    Eval(EvalArgs),
    /// Export importance weights and top words per class.
    Analyze(AnalyzeArgs),
    /// Generate a planted-signal synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Directory of `<class>.txt` files.
    #[arg(long)]
    pub docs: PathBuf,
    /// Stop-word file, one word per line (`#` starts a comment).
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Comma-separated class ids to read; default is every document.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Output vocabulary JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub docs: PathBuf,
    /// Vocabulary JSON written by `vocab`.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value = "binary")]
    pub weighting: String,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Output document-matrix JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Nszsl,
    Eszsl,
}

/// Solver settings. Unset values fall back to the library defaults.
#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "nszsl")]
    pub method: MethodName,
    /// `l21` or `frobenius` (nszsl only).
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub epsilon_ridge: Option<f64>,
    /// Rows of Wx and Wz; default is the number of seen classes.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// nszsl: weight of the matching term.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// nszsl: weight of the l2,1 (or Frobenius) penalty.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// eszsl: weight of the feature-side terms.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// eszsl: weight of the document-side terms.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// `top1`, `top5` or `mean_per_class_accuracy`.
    #[arg(long, default_value = "top1")]
    pub metric: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Fraction of seen classes held out per fold.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Smallest grid exponent b (values are 10^b).
    #[arg(long, default_value_t = -2, allow_hyphen_values = true)]
    pub grid_min: i32,
    #[arg(long, default_value_t = 6, allow_hyphen_values = true)]
    pub grid_max: i32,
    /// Repetitions with seeds seed, seed+1, ...; scored on the unseen classes.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model JSON; repeat for several trials.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value = "top1")]
    pub metric: String,
    /// Output JSON with every score and the summary; without it only the
    /// summary line is printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Take vocabulary and document matrices from this dataset.
    #[arg(long, conflicts_with_all = ["vocab", "z"])]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "z")]
    pub vocab: Option<PathBuf>,
    /// Document matrix JSON written by `featurize`.
    #[arg(long, requires = "vocab")]
    pub z: Option<PathBuf>,
    /// Words per class in the top-words table.
    #[arg(long, default_value_t = 15)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub num_seen: Option<usize>,
    #[arg(long)]
    pub num_unseen: Option<usize>,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long)]
    pub doc_dim: Option<usize>,
    #[arg(long)]
    pub informative_dims: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub doc_flip_prob: Option<f64>,
    #[arg(long)]
    pub feature_noise_std: Option<f64>,
    /// `bin` or `csv`.
    #[arg(long, default_value = "bin")]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: UsageError: {first}");
            return ExitCode::from(2);
        }
    };

    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: InvalidInput: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: InvalidInput: cannot start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let ctx = commands::Context { verbose: cli.verbose };
    let result = match &cli.command {
        Command::Vocab(a) => commands::vocab(&ctx, a),
        Command::Featurize(a) => commands::featurize(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Cv(a) => commands::cv(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Analyze(a) => commands::analyze(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.category());
            ExitCode::from(1)
        }
    }
}
