use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpstrat::{CovarianceKernel, Family};

/// Parses a decimal or a rational literal such as `1/6`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in '{s}'"));
            }
            num / den
        }
        None => s.parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: gpstrat::Error| e.to_string())
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("'{p}' is not a count")))
        .collect()
}

fn parse_real_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_real).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "gpstrat", version, about = "Stratonovich Riemann sums of rough Gaussian processes")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cubic-variation constants C_K and C_h
    Constants(ConstantsArgs),
    /// Numerical audit of the covariance conditions
    Audit(AuditArgs),
    /// Riemann-sum functionals on sampled paths
    Functionals(FunctionalsArgs),
    /// Draws from the limit law
    Limitlaw(LimitlawArgs),
    /// Monte Carlo experiments with verdicts
    Experiment(ExperimentArgs),
    /// Sample one path
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write output here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker thread cap
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for cached covariance factors
    #[arg(long, env = "GPSTRAT_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ProcessArgs {
    /// Process family: fbm, bbm, ext_bbm, sfbm
    #[arg(long, value_parser = parse_family)]
    pub process: Option<Family>,
    /// Hurst parameter (fbm, bbm, ext_bbm)
    #[arg(long = "H", value_parser = parse_real)]
    pub hurst: Option<f64>,
    /// Bifractional index (bbm, ext_bbm)
    #[arg(long = "K", value_parser = parse_real)]
    pub k: Option<f64>,
    /// Sub-fractional index (sfbm)
    #[arg(long = "h", value_parser = parse_real)]
    pub h: Option<f64>,
}

impl ProcessArgs {
    pub fn family(&self) -> Option<Family> {
        self.process
    }

    pub fn kernel(&self) -> Result<CovarianceKernel, crate::CliError> {
        let family = self
            .process
            .ok_or_else(|| crate::CliError::Usage("--process is required".into()))?;
        Ok(CovarianceKernel::from_parts(family, self.hurst, self.k, self.h)?)
    }
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Absolute tolerance on the series
    #[arg(long, default_value = "1e-10", value_parser = parse_real)]
    pub tol: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Condition to audit: i, ii, iii, iv, v, vi
    #[arg(long)]
    pub condition: Option<String>,
    /// Run conditions (i)-(v) with the family's exponents
    #[arg(long, conflicts_with = "condition")]
    pub all: bool,
    /// Scan resolution
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    /// Time horizon of the scan
    #[arg(long = "T", default_value = "2", value_parser = parse_real)]
    pub horizon: f64,
    #[arg(long, value_parser = parse_real)]
    pub theta: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub nu: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub gamma: Option<f64>,
    /// Time for condition (vi)
    #[arg(long, default_value = "1", value_parser = parse_real)]
    pub t: f64,
    /// Grid sizes for condition (vi)
    #[arg(long = "n-list", default_value = "64,128,256,512", value_parser = parse_usize_list)]
    pub n_list: std::vec::Vec<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct FunctionalsArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long = "T", default_value = "1", value_parser = parse_real)]
    pub horizon: f64,
    #[arg(long, default_value = "1", value_parser = parse_real)]
    pub t: f64,
    /// Test function: x, x3, x2/2, poly:c0,c1,...
    #[arg(long, default_value = "x3")]
    pub f: String,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    /// Summary statistic to report
    #[arg(long, value_enum, default_value_t = Stat::All)]
    pub stat: Stat,
    /// Also write one row per path to this CSV file
    #[arg(long = "dump-paths")]
    pub dump_paths: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stat {
    Mean,
    Var,
    Skew,
    Kurtosis,
    All,
}

#[derive(Debug, Args)]
pub struct LimitlawArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value = "1", value_parser = parse_real)]
    pub t: f64,
    #[arg(long, default_value = "x3")]
    pub f: String,
    #[arg(long, default_value_t = 20_000)]
    pub paths: usize,
    /// Sign in front of the correction: plus or minus
    #[arg(long, default_value = "plus")]
    pub sign: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML file with experiment settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// weak_limit, vanishing, scaling, eta_convergence
    #[arg(long)]
    pub experiment: Option<String>,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long = "n-list", value_parser = parse_usize_list)]
    pub n_list: Option<std::vec::Vec<usize>>,
    #[arg(long = "t-list", value_parser = parse_real_list)]
    pub t_list: Option<std::vec::Vec<f64>>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long = "ks-threshold", value_parser = parse_real)]
    pub ks_threshold: Option<f64>,
    #[arg(long = "vanishing-ratio", value_parser = parse_real)]
    pub vanishing_ratio: Option<f64>,
    /// Also write a plot-ready CSV (one row per n) here
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long = "T", default_value = "1", value_parser = parse_real)]
    pub horizon: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

impl CommonArgs {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Constants(a) => &a.common,
            Command::Audit(a) => &a.common,
            Command::Functionals(a) => &a.common,
            Command::Limitlaw(a) => &a.common,
            Command::Experiment(a) => &a.common,
            Command::Simulate(a) => &a.common,
        }
    }
}
