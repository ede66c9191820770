//! `bbgc`: simulate, ampute, impute, benchmark and coverage workflows.
//!
//! Exit status is 0 on success, 1 on a runtime or numerical failure and 2 on
//! a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use bbgc::eval::Method;
use bbgc::gibbs::{MarginalMode, OrdinalPoint};
use bbgc::missingness::Mechanism;
use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(bbgc::Error),
}

impl From<bbgc::Error> for CliError {
    fn from(e: bbgc::Error) -> Self {
        match e {
            bbgc::Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(bbgc::Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[derive(Parser, Debug)]
#[command(
    name = "bbgc",
    version,
    about = "Bayesian-bootstrap Gaussian copula imputation"
)]
pub struct Cli {
    /// key = value file; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw the three-block synthetic design
    Simulate(SimulateArgs),
    /// Impose MCAR or MAR missingness on a CSV
    Ampute(AmputeArgs),
    /// Fill missing cells of a CSV
    Impute(ImputeArgs),
    /// Replicated NRMSE comparison over a mechanism x rate x method grid
    Benchmark(BenchmarkArgs),
    /// Credible-band coverage of the true marginal CDFs
    Coverage(CoverageArgs),
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    /// Rows
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns, a multiple of 3
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Directory for data.csv, data.schema, r_true.csv and simulation.json
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Schema file with `name,continuous` or `name,ordinal,levels` lines
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub missing_token: Option<String>,
}

#[derive(Args, Debug)]
pub struct AmputeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mechanism: Option<Mechanism>,
    /// Fraction of cells to mask, in (0, 1)
    #[arg(long, conflicts_with = "count")]
    pub rate: Option<f64>,
    /// Exact number of cells to mask
    #[arg(long)]
    pub count: Option<usize>,
    /// 0-based anchor columns for MAR
    #[arg(long, value_delimiter = ',')]
    pub anchors: Option<Vec<usize>>,
    /// Logistic slope for MAR
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the 0/1 observed mask
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChainArgs {
    /// Marginal draws M
    #[arg(long)]
    pub m: Option<usize>,
    /// Gibbs sweeps per marginal draw
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// bootstrap or ecdf
    #[arg(long)]
    pub marginals: Option<MarginalMode>,
    /// Neighbours for the knn method
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// bbgc, mean or knn
    #[arg(long)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Complete CSV with the true values; adds NRMSE to the report
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// JSON run report
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Fixed truth CSV instead of the synthetic design
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub missing_token: Option<String>,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_delimiter = ',')]
    pub mechanisms: Option<Vec<Mechanism>>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub anchors: Option<Vec<usize>>,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Ordinal point estimate scored for bbgc: mean or mode
    #[arg(long)]
    pub ordinal_point: Option<OrdinalPoint>,
    /// Report CSV, one row per design cell
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// JSON report
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// MCAR rate applied before drawing bands
    #[arg(long)]
    pub rate: Option<f64>,
    /// Bootstrap draws per band
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// 0-based columns (default: first of each block)
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<usize>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
