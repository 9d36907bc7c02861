//! Command-line harness: configuration, orchestration and artifacts.
//!
//! Exit codes: 0 when every enabled check passes, 2 when a check fails,
//! 1 on configuration or runtime errors.

pub mod artifacts;
pub mod checks;
pub mod commands;
pub mod config;
pub mod spectral;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use helfrich::sde_sim::Regime;
use thiserror::Error;

use crate::checks::Selection;
use crate::commands::Outcome;
use crate::config::{parse_epsilons, ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] helfrich::sde_sim::SimError),
    #[error(transparent)]
    Homogenize(#[from] helfrich::homogenize::HomogenizeError),
}

#[derive(Debug, Parser)]
#[command(name = "helfrich", version, about = "Particles on fluctuating Helfrich membranes: simulation and homogenization checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate ensembles, write subsampled paths and lift diagnostics.
    Simulate(CommonArgs),
    /// Solve the cell problems and write the homogenized coefficients.
    Solve(CommonArgs),
    /// Compare one Monte-Carlo ensemble with the spectral reference.
    Compare(CommonArgs),
    /// Convergence table over the ε grid.
    Table(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long, env = "HELFRICH_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "HELFRICH_REGIME", value_parser = parse_regime)]
    pub regime: Option<Regime>,
    /// Single ε; shorthand for a one-element --epsilons.
    #[arg(long, env = "HELFRICH_EPSILON", conflicts_with = "epsilons")]
    pub epsilon: Option<f64>,
    /// Comma-separated ε grid.
    #[arg(long, env = "HELFRICH_EPSILONS")]
    pub epsilons: Option<String>,
    #[arg(long, env = "HELFRICH_PATHS")]
    pub paths: Option<usize>,
    #[arg(long, env = "HELFRICH_DT")]
    pub dt: Option<f64>,
    #[arg(long, env = "HELFRICH_HORIZON")]
    pub horizon: Option<f64>,
    #[arg(long, env = "HELFRICH_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "HELFRICH_CUTOFF")]
    pub cutoff: Option<u32>,
    #[arg(long, env = "HELFRICH_FOURIER_MODES")]
    pub fourier_modes: Option<usize>,
    #[arg(long, env = "HELFRICH_HERMITE_DEGREE")]
    pub hermite_degree: Option<usize>,
    #[arg(long, env = "HELFRICH_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "HELFRICH_WORKERS")]
    pub workers: Option<usize>,
    /// all, none or a comma-separated list of check names.
    #[arg(long, env = "HELFRICH_CHECK", default_value = "all")]
    pub check: Selection,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse().map_err(|e: helfrich::sde_sim::SimError| e.to_string())
}

impl CommonArgs {
    /// Defaults, then the file, then environment and flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref())?;
        let epsilons = match (&self.epsilons, self.epsilon) {
            (Some(list), _) => Some(parse_epsilons(list).map_err(HarnessError::Config)?),
            (None, Some(e)) => Some(vec![e]),
            (None, None) => None,
        };
        cfg.apply(&Overrides {
            regime: self.regime,
            epsilons,
            paths: self.paths,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
            cutoff: self.cutoff,
            fourier_modes: self.fourier_modes,
            hermite_degree: self.hermite_degree,
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

/// Runs a parsed command inside a pool of the requested size.
pub fn execute(cli: &Cli) -> Result<Outcome, HarnessError> {
    let (args, run): (&CommonArgs, fn(&ExperimentConfig, &Selection) -> Result<Outcome, HarnessError>) = match &cli.command {
        Command::Simulate(a) => (a, |c, _| commands::simulate(c)),
        Command::Solve(a) => (a, commands::solve),
        Command::Compare(a) => (a, commands::compare),
        Command::Table(a) => (a, commands::table),
    };
    let cfg = args.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| HarnessError::Compute(e.to_string()))?;
    pool.install(|| run(&cfg, &args.check))
}

/// Parses `args`, runs, reports on stderr and returns the exit code.
pub fn main_with_args<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            if out.cache_hit == Some(true) {
                eprintln!("spectral solution loaded from cache");
            }
            for c in &out.checks {
                eprintln!("{} {}: {:e} (threshold {:e}) {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold, c.detail);
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            if out.passed() {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
