//! Batch driver: configure, run, checkpoint and report.
//!
//! Exit codes: 0 every check passed, 1 validation or check failure, 2 a
//! convergence verdict failed, 3 runtime fault.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rev_euler::iteration::ThirdProductFactor;
use rev_euler::{Error, Family};

use commands::Outcome;
use config::{CheckpointMode, RunConfig};
use output::Output;

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "REV_EULER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rev-euler", version, about = "Singular-data fixed-point laboratory for the time-reversed Euler equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Divergence, gradient, Hölder and decay checks of the data.
    DataCheck,
    /// Kernel antisymmetry, moments and degeneracy scan.
    KernelCheck,
    /// Contraction horizon search and a checkpointed run at that horizon.
    Iterate,
    /// Viscosity limit drive with residual, slab and compactification diagnostics.
    Limit,
    /// Re-render CSV and JSON tables from an output directory.
    Report,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Planar,
    Radial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProductFactorArg {
    V2,
    V3,
}

/// Flags that override the configuration file.
#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of every sampled point and pair set.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    /// Viscosity; also replaces the limit schedule by this single value and,
    /// without --eps, sets eps = nu.
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    /// Mollifier scale; for `limit` it applies to every schedule entry.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Horizon search start for `iterate`, fixed horizon for `limit`.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub kmax: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub family: Option<FamilyArg>,
    /// Final factor of the third product in the first-step Burgers term.
    #[arg(long = "compat-eq19", global = true, value_enum)]
    pub compat_eq19: Option<ProductFactorArg>,
    /// Replace the data by zero.
    #[arg(long, global = true)]
    pub zero_data: bool,
    /// Which iterates `iterate` dumps.
    #[arg(long, global = true, value_enum)]
    pub checkpoints: Option<CheckpointMode>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let it = &mut cfg.iteration;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            it.seed = seed;
        }
        if let Some(n) = self.grid_n {
            it.grid_n = n;
        }
        if let Some(nu) = self.nu {
            it.nu = nu;
            it.eps = nu;
            cfg.limit.nus = vec![nu];
            cfg.limit.epss = None;
        }
        if let Some(eps) = self.eps {
            it.eps = eps;
            cfg.limit.epss = Some(vec![eps; cfg.limit.nus.len()]);
        }
        if let Some(t) = self.horizon {
            it.horizon = t;
            cfg.limit.horizon = Some(t);
        }
        if let Some(k) = self.kmax {
            it.kmax = k;
        }
        if let Some(f) = self.family {
            it.params.family = match f {
                FamilyArg::Planar => Family::Planar,
                FamilyArg::Radial => Family::Radial,
            };
        }
        if let Some(c) = self.compat_eq19 {
            it.compat_eq19 = match c {
                ProductFactorArg::V2 => ThirdProductFactor::V2,
                ProductFactorArg::V3 => ThirdProductFactor::V3,
            };
        }
        if self.zero_data {
            it.zero_data = true;
        }
        if let Some(c) = self.checkpoints {
            cfg.diagnostics.checkpoints = c;
        }
    }

    pub fn resolve(&self) -> rev_euler::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }
}

pub fn error_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::InvalidGrid(_) | Error::InvalidConfig(_) => 1,
        Error::NoContraction { .. } | Error::NotCauchy => 2,
        _ => 3,
    }
}

pub fn exit_code(result: &rev_euler::Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::CheckFailed(_)) => 1,
        Ok(Outcome::VerdictFailed(_)) => 2,
        Err(e) => error_code(e),
    }
}

fn configure_threads() -> rev_euler::Result<()> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
            rev_euler::init_threads(n)
        }
        Err(_) => Ok(()),
    }
}

pub fn run(cli: &Cli) -> rev_euler::Result<Outcome> {
    configure_threads()?;
    let cfg = cli.overrides.resolve()?;
    if cli.command == Command::Config {
        print!("{}", cfg.to_toml()?);
        return Ok(Outcome::Pass);
    }
    cfg.validate()?;
    let out = Output::create(&cfg.out_dir)?;
    match cli.command {
        Command::DataCheck => commands::data_check(&cfg, &out),
        Command::KernelCheck => commands::kernel_check(&cfg, &out),
        Command::Iterate => commands::iterate(&cfg, &out),
        Command::Limit => commands::limit(&cfg, &out),
        Command::Report => commands::report(&out),
        Command::Config => unreachable!(),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let result = run(&cli);
    match &result {
        Ok(Outcome::Pass) => {}
        Ok(Outcome::CheckFailed(names)) => eprintln!("failed checks: {}", names.join(", ")),
        Ok(Outcome::VerdictFailed(why)) => eprintln!("verdict failed: {why}"),
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(error_code(&Error::InvalidParams("x".into())), 1);
        assert_eq!(error_code(&Error::NoContraction { horizon: 0.1 }), 2);
        assert_eq!(error_code(&Error::NotCauchy), 2);
        assert_eq!(error_code(&Error::NonFiniteField { k: 2, node: 3 }), 3);
        assert_eq!(exit_code(&Ok(Outcome::VerdictFailed("x".into()))), 2);
        assert_eq!(exit_code(&Ok(Outcome::CheckFailed(vec![]))), 1);
    }

    #[test]
    fn eps_override_applies_to_the_whole_schedule() {
        let mut cfg = RunConfig::default();
        Overrides { eps: Some(0.01), ..Default::default() }.apply(&mut cfg);
        assert_eq!(cfg.limit.eps_schedule(), vec![0.01; 3]);
        assert_eq!(cfg.limit.nus, RunConfig::default().limit.nus);
        cfg.validate().unwrap();
    }

    #[test]
    fn nu_override_couples_eps_unless_given() {
        let mut cfg = RunConfig::default();
        Overrides { nu: Some(0.2), eps: Some(0.05), ..Default::default() }.apply(&mut cfg);
        assert_eq!((cfg.iteration.nu, cfg.iteration.eps), (0.2, 0.05));
        assert_eq!(cfg.limit.eps_schedule(), vec![0.05]);
    }
}
