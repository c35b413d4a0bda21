//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{RawConfig, SEED_ENV};
use crate::error::{CliError, Result};
use crate::experiments::run;
use crate::synthetic::SyntheticDesign;

#[derive(Debug, Parser)]
#[command(name = "loomix", version, about = "Leave-one-out predictive density estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// INI-style config file with [section] headers.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed. Overrides the config file and LOOMIX_SEED.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Comma-separated estimators: loo, posterior, mixture, psis, bronze, gold, silver.
    #[arg(long, global = true, value_name = "LIST")]
    pub method: Option<String>,

    /// gaussian-conjugate, gaussian-unknown-noise or logistic.
    #[arg(long, global = true, value_name = "NAME")]
    pub model: Option<String>,

    /// CSV dataset: header row, response column `y` first.
    #[arg(long, global = true, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Center and scale covariates (and a Gaussian response).
    #[arg(long, global = true)]
    pub standardize: bool,

    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// json or csv.
    #[arg(long, global = true, value_name = "FMT")]
    pub format: Option<String>,

    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Add wall-clock rows to the output (breaks byte-reproducibility).
    #[arg(long, global = true)]
    pub timing: bool,

    /// Override any config key, e.g. `--set design.n=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leverage quantiles across design sizes and priors.
    Leverage,
    /// Write one synthetic dataset as CSV.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
    },
    /// Run estimators on a CSV dataset.
    Estimate,
    /// Run the design named by `experiment.design` or `--design`.
    Experiment {
        /// fig1-leverage, fig2-mse-grid, fig3-mse-vs-S or estimate-file.
        #[arg(long)]
        design: Option<String>,
    },
}

/// Merges config file, `LOOMIX_SEED` and flags, in increasing precedence.
pub fn raw_config(cli: &Cli, seed_env: Option<&str>) -> Result<RawConfig> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_path(path)?,
        None => RawConfig::new(),
    };
    raw.apply_seed_env(seed_env)?;
    for s in &cli.set {
        raw.set_assignment(s)?;
    }
    let path_str = |p: &PathBuf| p.to_string_lossy().into_owned();
    let flags: [(&str, Option<String>); 7] = [
        ("experiment.seed", cli.seed.map(|s| s.to_string())),
        ("experiment.methods", cli.method.clone()),
        ("data.model", cli.model.clone()),
        ("data.path", cli.data.as_ref().map(path_str)),
        ("experiment.out", cli.out.as_ref().map(path_str)),
        ("experiment.format", cli.format.clone()),
        ("experiment.threads", cli.threads.map(|t| t.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            raw.set(k, &v)?;
        }
    }
    if cli.standardize {
        raw.set("data.standardize", "true")?;
    }
    if cli.timing {
        raw.set("experiment.timing", "true")?;
    }
    match &cli.command {
        Command::Leverage => raw.set("experiment.design", "fig1-leverage")?,
        Command::Estimate => raw.set("experiment.design", "estimate-file")?,
        Command::Experiment { design: Some(d) } => raw.set("experiment.design", d)?,
        Command::Experiment { design: None } => {
            if raw.get("experiment.design").is_none() {
                return Err(CliError::Config(
                    "no design: set `experiment.design` or pass --design".into(),
                ));
            }
        }
        Command::Simulate { n, p } => {
            raw.set("experiment.design", "fig3-mse-vs-S")?;
            if let Some(n) = n {
                raw.set("design.n", &n.to_string())?;
            }
            if let Some(p) = p {
                raw.set("design.p", &p.to_string())?;
            }
        }
    }
    Ok(raw)
}

fn simulate(raw: &RawConfig) -> Result<()> {
    let cfg = raw.resolve()?;
    let n = cfg.n[0];
    let design = SyntheticDesign {
        n,
        p: cfg.p.resolve(n)[0],
        sigma2: cfg.sigma2,
        tau2: cfg.tau2,
        prior: cfg.priors[0],
    };
    let (_, data) = design.generate(cfg.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, buf)?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

pub fn execute(cli: &Cli, seed_env: Option<&str>) -> Result<()> {
    let raw = raw_config(cli, seed_env)?;
    if let Command::Simulate { .. } = cli.command {
        return simulate(&raw);
    }
    let cfg = raw.resolve()?;
    let table = run(&cfg)?;
    table.emit(&cfg)
}

/// Parses `args`, runs, and returns the process exit status.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let env = std::env::var(SEED_ENV).ok();
    match execute(&cli, env.as_deref()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("loomix: {e}");
            e.exit_code()
        }
    }
}
