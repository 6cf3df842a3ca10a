use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod data;
mod error;
mod model_file;
mod simulate;

use data::LabelCol;

#[derive(Parser)]
#[command(name = "clusterfuse", version, about = "Clustered joint estimation of Gaussian precision matrices")]
struct Cli {
    /// Worker threads for parallel fits (defaults to all cores).
    #[arg(long, global = true, env = "CLUSTERFUSE_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit CRF or PCEN to a labeled CSV and write a model file.
    Estimate(EstimateArgs),
    /// Run replicated simulations and write tidy results.
    Simulate(SimulateArgs),
    /// Score a tuning grid by cross-validated likelihood.
    Tune(TuneArgs),
    /// Quadratic discriminant analysis.
    #[command(subcommand)]
    Qda(QdaCommand),
}

#[derive(Subcommand)]
enum QdaCommand {
    /// Fit a classifier and write a model file.
    Train(TrainArgs),
    /// Classify rows with a saved model.
    Predict(PredictArgs),
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Labeled CSV, one observation per row.
    #[arg(long)]
    pub input: PathBuf,
    /// First row is a header.
    #[arg(long)]
    pub header: bool,
    /// Label column: `last` or a 0-based index.
    #[arg(long, default_value = "last")]
    pub label_col: LabelCol,
}

#[derive(Args, Clone)]
pub struct PenaltyArgs {
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
    /// Number of clusters.
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// JSON grid `{"lambda1": [...], "lambda2": [...], "q": [...]}`; selects by cross-validation.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateMethod {
    Crf,
    Pcen,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMethod {
    Crf,
    Pcen,
    /// Separate ridge estimates (CRF with lambda2 = 0).
    Ridge,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Empirical,
    Uniform,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, value_enum)]
    pub method: EstimateMethod,
    /// Model JSON to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, value_enum, default_value = "crf")]
    pub method: TrainMethod,
    #[arg(long, value_enum, default_value = "empirical")]
    pub priors: PriorArg,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Model JSON written by `estimate` or `qda train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: InputArgs,
    /// CSV of predicted labels.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub method: EstimateMethod,
    #[arg(long)]
    pub grid_file: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV score table.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// block_er, blockdiag_er, blockdiag_identity or qda_dense.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    /// Training observations per class.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Test observations per class (qda_dense only).
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.45)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid of penalties; every point is fitted in every replication.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    /// Method to fit; crf for qda_dense and pcen otherwise by default.
    #[arg(long, value_enum)]
    pub method: Option<EstimateMethod>,
    /// Tidy CSV to write.
    #[arg(long)]
    pub output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("parameter error: --workers must be at least 1");
            return ExitCode::from(4);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Estimate(a) => commands::estimate(&a),
        Command::Simulate(a) => simulate::run(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Qda(QdaCommand::Train(a)) => commands::train(&a),
        Command::Qda(QdaCommand::Predict(a)) => commands::predict(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
