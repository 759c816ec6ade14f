//! Command-line front end: prior sampling, posterior experiments and the
//! spanning tree benchmark.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rstmrf::Error> for CliError {
    fn from(e: rstmrf::Error) -> Self {
        use rstmrf::Error as E;
        match e {
            E::NumericalBreakdown { .. } | E::StepBudgetExceeded { .. } => CliError::Numerical(e.to_string()),
            E::Io(err) => CliError::Io(err.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "rstmrf", version, about = "Random spanning tree MRF priors for imaging inverse problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw images (and trees) from a prior.
    SamplePrior(SamplePriorArgs),
    /// Run the Gibbs sampler on a denoising, deblurring or inpainting problem.
    RunExperiment(ExperimentArgs),
    /// Measure Wilson walk lengths on n×n grids.
    BenchmarkTrees(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat key = value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Args)]
pub struct SamplePriorArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// gaussian|laplace|cauchy (or gmrf|lmrf|cmrf).
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub rst: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub root_weight: Option<String>,
    #[arg(long)]
    pub rho_rel: Option<String>,
    /// N or HxW.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    /// Wilson root vertex for single-tree sampling.
    #[arg(long)]
    pub root: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// denoising|deblurring|inpainting
    #[arg(long)]
    pub experiment: Option<String>,
    /// One family or a comma list.
    #[arg(long)]
    pub family: Option<String>,
    /// true, false or a comma list of both.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub rst: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    /// Comma list or log:min:max:count.
    #[arg(long)]
    pub lambda_sweep: Option<String>,
    #[arg(long)]
    pub rho_rel: Option<String>,
    #[arg(long)]
    pub root_weight: Option<String>,
    /// Lower bound on conjugate tree weights; off by default.
    #[arg(long)]
    pub weight_floor: Option<String>,
    /// Noise standard deviation (not variance).
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub iters: Option<String>,
    #[arg(long)]
    pub chains: Option<String>,
    #[arg(long)]
    pub burnin: Option<String>,
    #[arg(long)]
    pub cg_tol: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub precondition: Option<String>,
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub phantom: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma list of grid side lengths.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma list of horizontal edge weights.
    #[arg(long)]
    pub kappa: Option<String>,
    /// Comma list of terminal weights; 0 disables the terminal.
    #[arg(long)]
    pub rho_rel: Option<String>,
    #[arg(long)]
    pub repeats: Option<String>,
}

fn load(common: &CommonArgs) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    cfg.set_opt("seed", common.seed.as_ref());
    cfg.set_opt("out_dir", common.out_dir.as_ref());
    Ok(cfg)
}

/// Merges the config file with flag overrides for a parsed command line.
pub fn resolve(command: &Command) -> Result<Config, CliError> {
    match command {
        Command::SamplePrior(a) => {
            let mut c = load(&a.common)?;
            for (k, v) in [
                ("family", &a.family),
                ("rst", &a.rst),
                ("lambda", &a.lambda),
                ("root_weight", &a.root_weight),
                ("rho_rel", &a.rho_rel),
                ("size", &a.size),
                ("samples", &a.samples),
                ("root", &a.root),
            ] {
                c.set_opt(k, v.as_ref());
            }
            Ok(c)
        }
        Command::RunExperiment(a) => {
            let mut c = load(&a.common)?;
            for (k, v) in [
                ("experiment", &a.experiment),
                ("family", &a.family),
                ("rst", &a.rst),
                ("lambda", &a.lambda),
                ("lambda_sweep", &a.lambda_sweep),
                ("rho_rel", &a.rho_rel),
                ("root_weight", &a.root_weight),
                ("weight_floor", &a.weight_floor),
                ("sigma", &a.sigma),
                ("iters", &a.iters),
                ("chains", &a.chains),
                ("burnin", &a.burnin),
                ("cg_tol", &a.cg_tol),
                ("precondition", &a.precondition),
                ("size", &a.size),
                ("phantom", &a.phantom),
            ] {
                c.set_opt(k, v.as_ref());
            }
            Ok(c)
        }
        Command::BenchmarkTrees(a) => {
            let mut c = load(&a.common)?;
            for (k, v) in [
                ("sizes", &a.sizes),
                ("kappa", &a.kappa),
                ("rho_rel", &a.rho_rel),
                ("repeats", &a.repeats),
            ] {
                c.set_opt(k, v.as_ref());
            }
            Ok(c)
        }
    }
}

/// Runs a parsed command line and returns the lines to print.
pub fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let cfg = resolve(&cli.command)?;
    match cli.command {
        Command::SamplePrior(_) => commands::sample_prior(cfg),
        Command::RunExperiment(_) => commands::run_experiment(cfg),
        Command::BenchmarkTrees(_) => commands::benchmark_trees(cfg),
    }
}
