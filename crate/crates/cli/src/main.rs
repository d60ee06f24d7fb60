use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "nacart", version, about = "Regression trees and benchmarks for data with missing values")]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file. CSV goes to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// File of `key = value` lines; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a labeled dataset and optionally insert missing values.
    Simulate(SimulateArgs),
    /// Insert missing values into a feature CSV.
    Ampute(AmputeArgs),
    /// Fit an imputer on one CSV and apply it to another.
    Impute(ImputeArgs),
    /// Gaussian maximum likelihood by EM; prints mean then covariance rows.
    Em(EmArgs),
    /// Fit a tree, forest or boosted ensemble.
    Fit(FitArgs),
    /// Closed-form single-split risks over a grid.
    Theory(TheoryArgs),
    /// Repeated train/test experiments, one record per repetition and method.
    Bench(BenchArgs),
    /// Root-split selection frequency of stumps.
    Selectfreq(SelectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value = "quadratic")]
    pub model: String,
    #[arg(long, default_value_t = 9)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
}

#[derive(Args, Debug, Clone)]
pub struct PatternArgs {
    /// mcar, mnar, predictive or none.
    #[arg(long, default_value = "none")]
    pub pattern: String,
    #[arg(long, default_value_t = 0.0)]
    pub p: f64,
    /// 1-based columns receiving missing values; all columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub cols: Vec<usize>,
    /// Response shift for rows missing under the predictive pattern.
    #[arg(long, default_value_t = 3.0)]
    pub shift: f64,
}

#[derive(Args, Debug, Clone)]
pub struct LearnerArgs {
    /// mia, surrogate, prob or block.
    #[arg(long, default_value = "mia")]
    pub strategy: String,
    /// tree, forest or boost.
    #[arg(long, default_value = "tree")]
    pub learner: String,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub min_split: Option<usize>,
    #[arg(long)]
    pub cp: Option<f64>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub pattern: PatternArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
}

#[derive(Args, Debug)]
pub struct AmputeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub pattern: PatternArgs,
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    /// mean, oor or gaussian.
    #[arg(long, default_value = "mean")]
    pub method: String,
    /// Append one indicator column per feature.
    #[arg(long, overrides_with = "no_mask")]
    pub mask: bool,
    #[arg(long, overrides_with = "mask")]
    pub no_mask: bool,
    #[arg(long)]
    pub train: PathBuf,
    /// File to transform; the training file when omitted.
    #[arg(long)]
    pub apply: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Write the fitted trees as indented text.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Feature file to predict; predictions go to --out.
    #[arg(long)]
    pub predict: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    /// `start:stop:step` or a comma list.
    #[arg(long, default_value = "0:0.95:0.05")]
    pub p_grid: String,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
    pub eta: Vec<f64>,
    /// Add Monte-Carlo risks of fitted stumps with standard errors.
    #[arg(long)]
    pub mc_check: bool,
    #[arg(long, default_value_t = 10_000)]
    pub mc_n: usize,
    #[arg(long, default_value_t = 20)]
    pub mc_reps: usize,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub pattern: PatternArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Training sizes; several values run one experiment each.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub n: Vec<usize>,
    /// Test size; defaults to the training size.
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Comma list of pipelines; all of them when omitted.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Record fit and predict times (makes output run-dependent).
    #[arg(long)]
    pub timings: bool,
    /// box or curve, for --format svg.
    #[arg(long, default_value = "box")]
    pub plot: String,
    /// Also estimate the Bayes R² with this many imputations per row.
    #[arg(long)]
    pub bayes_k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[arg(long, default_value = "0,0.25,0.5,0.75")]
    pub p_grid: String,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub n_grid: Vec<usize>,
    /// x1 or both.
    #[arg(long, default_value = "x1")]
    pub missing_on: String,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
