//! `tagbias`: estimate, sample, diagnose and simulate tag-count compositions.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tagbias::samplers::{Model, DEFAULT_BURN_IN, DEFAULT_ITERATIONS, DEFAULT_THIN};

#[derive(Parser, Debug)]
#[command(
    name = "tagbias",
    version,
    about = "Bias-corrected composition inference for tag counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Naive and corrected MLEs plus deterministic mode and mean estimates.
    Estimate(EstimateArgs),
    /// Run a Gibbs sampler and summarize its retained draws.
    Sample(SampleArgs),
    /// Autocorrelation tables over a stored sample archive.
    Diagnose(DiagnoseArgs),
    /// Write a synthetic dataset.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct PriorArgs {
    /// Dirichlet prior: `1`, `1/k`, a constant, or `@file` with one value per line.
    #[arg(long, default_value = "1")]
    pub alpha: String,
    /// Gamma shape of the population-size prior.
    #[arg(long, default_value_t = tagbias::model::DEFAULT_GAMMA1)]
    pub gamma1: f64,
    /// Gamma rate of the population-size prior.
    #[arg(long, default_value_t = tagbias::model::DEFAULT_GAMMA2)]
    pub gamma2: f64,
    /// Poisson mean of the population size [default: natural population estimate].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Prior mean of the untagged count in the missing-data model
    /// [default: T (1 - s) / s at the corrected MLE].
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Dataset TSV.
    #[arg(long, short)]
    pub input: PathBuf,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Choose (gamma1, gamma2) for the Lindley-Smith mode from a grid by
    /// distance to the corrected MLE.
    #[arg(long)]
    pub select_gamma: bool,
    /// Convergence tolerance of the iterative estimators.
    #[arg(long, default_value_t = tagbias::optimize::DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = tagbias::optimize::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Rows in the plot table, by descending tag count.
    #[arg(long, default_value_t = tagbias::diagnostics::DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Directory receiving report.json and plot.csv.
    #[arg(long, short, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_model, default_value = "md")]
    pub model: Model,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: u64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    pub burn_in: u64,
    #[arg(long, default_value_t = DEFAULT_THIN)]
    pub thin: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Category ids whose draws are traced, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub trace: Vec<String>,
    /// Summarize the final W retained draws.
    #[arg(long, default_value_t = tagbias::diagnostics::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = tagbias::diagnostics::DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Autocorrelation lags reported for the traced series.
    #[arg(long, value_delimiter = ',', default_values_t = tagbias::diagnostics::DEFAULT_LAGS)]
    pub lags: Vec<usize>,
    /// Also report the model's deterministic mode (DPB and MD only).
    #[arg(long)]
    pub with_mode: bool,
    /// Store every retained composition in the archive.
    #[arg(long)]
    pub store_full: bool,
    #[arg(long, short, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Sample archive written by `sample`.
    #[arg(long, short)]
    pub archive: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = tagbias::diagnostics::DEFAULT_LAGS)]
    pub lags: Vec<usize>,
    /// Also write the tables as a JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Library-scale synthetic dataset (6096 categories).
    #[arg(long, conflicts_with_all = ["truth", "population", "lambda"])]
    pub library_scale: bool,
    /// TSV with columns `id m phi` giving the true composition.
    #[arg(long, required_unless_present = "library_scale")]
    pub truth: Option<PathBuf>,
    /// Fixed population size.
    #[arg(long, conflicts_with = "lambda")]
    pub population: Option<u64>,
    /// Poisson mean of the population size.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output dataset TSV.
    #[arg(long, short)]
    pub output: PathBuf,
}

fn parse_model(s: &str) -> Result<Model, String> {
    s.parse().map_err(|e: tagbias::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate(args) => commands::estimate(&args),
        Command::Sample(args) => commands::sample(&args),
        Command::Diagnose(args) => commands::diagnose(&args),
        Command::Simulate(args) => commands::simulate(&args),
    };
    match outcome {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
