//! Experiment configuration.
//!
//! A config file is INI-like: `key = value` lines grouped under `[section]`
//! headers. Every key is addressed as `section.key` and every key can be
//! overridden from the command line. Values are resolved in this order, last
//! wins: per-design defaults, config file, `LOOMIX_SEED` (seed only), flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use loomix_core::conjugate::PriorCovariance;
use loomix_core::estimators::Method;
use loomix_core::glm::CoordinatePrior;
use loomix_core::hmc::{HmcConfig, Init, LeapfrogSteps};

use crate::error::{config_err, CliError, Result};

pub const SEED_ENV: &str = "LOOMIX_SEED";

const KNOWN_KEYS: &[&str] = &[
    "experiment.design",
    "experiment.seed",
    "experiment.replicates",
    "experiment.methods",
    "experiment.out",
    "experiment.format",
    "experiment.threads",
    "experiment.timing",
    "design.n",
    "design.p",
    "design.p_over_n",
    "design.sigma2",
    "design.tau2",
    "design.prior",
    "design.draws",
    "design.subsample_k",
    "data.path",
    "data.model",
    "data.standardize",
    "data.sigma2",
    "data.prior",
    "data.ig_shape",
    "data.ig_rate",
    "hmc.warmup",
    "hmc.chains",
    "hmc.target_accept",
    "hmc.leapfrog",
    "truth.protocol",
    "truth.draws",
    "truth.seed",
    "truth.cache",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    Fig1Leverage,
    Fig2MseGrid,
    Fig3MseVsS,
    EstimateFile,
}

impl Design {
    pub fn name(&self) -> &'static str {
        match self {
            Design::Fig1Leverage => "fig1-leverage",
            Design::Fig2MseGrid => "fig2-mse-grid",
            Design::Fig3MseVsS => "fig3-mse-vs-S",
            Design::EstimateFile => "estimate-file",
        }
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            Design::Fig1Leverage => &[
                ("design.n", "100"),
                ("design.p", "5,10,25,50,75,90,150,300,1000"),
                ("design.prior", "flat,iso:10,scaled:10"),
                ("experiment.replicates", "20"),
            ],
            Design::Fig2MseGrid => &[
                ("design.n", "50"),
                ("design.p_over_n", "0.1,0.5,1,2,3"),
                ("design.prior", "scaled:100"),
                ("design.draws", "2000"),
                ("experiment.replicates", "100"),
            ],
            Design::Fig3MseVsS => &[
                ("design.n", "100"),
                ("design.p", "100"),
                ("design.prior", "iso:10"),
                ("design.draws", "250,500,1000,2000,4000,8000"),
                ("experiment.replicates", "100"),
            ],
            Design::EstimateFile => &[("design.draws", "4000")],
        }
    }
}

impl FromStr for Design {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        [
            Design::Fig1Leverage,
            Design::Fig2MseGrid,
            Design::Fig3MseVsS,
            Design::EstimateFile,
        ]
        .into_iter()
        .find(|d| d.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| {
            CliError::Config(format!(
                "unknown design `{s}` (expected fig1-leverage, fig2-mse-grid, fig3-mse-vs-S or estimate-file)"
            ))
        })
    }
}

/// Prior on the regression coefficients.
///
/// `scaled:c` is `Sigma = (c / p) I`, whose total prior signal stays fixed as
/// `p` grows. For the non-conjugate models `iso` and `scaled` are independent
/// Gaussians and `laplace` without a scale uses `b = sqrt(50 / p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    Flat,
    Iso(f64),
    Scaled(f64),
    Laplace(Option<f64>),
}

impl PriorSpec {
    pub fn variance(&self, p: usize) -> Option<f64> {
        match self {
            PriorSpec::Iso(v) => Some(*v),
            PriorSpec::Scaled(c) => Some(c / p as f64),
            _ => None,
        }
    }

    pub fn covariance(&self, p: usize) -> Result<PriorCovariance> {
        match self {
            PriorSpec::Flat => Ok(PriorCovariance::Flat),
            PriorSpec::Laplace(_) => config_err("a Laplace prior needs a non-conjugate model"),
            _ => Ok(PriorCovariance::isotropic(self.variance(p).unwrap())?),
        }
    }

    pub fn coordinate(&self, p: usize) -> Result<CoordinatePrior> {
        match self {
            PriorSpec::Flat => config_err("non-conjugate models need a proper prior"),
            PriorSpec::Laplace(b) => {
                let b = b.unwrap_or_else(|| (50.0 / p as f64).sqrt());
                Ok(CoordinatePrior::laplace_iid(p, b)?)
            }
            _ => Ok(CoordinatePrior::gaussian_iid(p, self.variance(p).unwrap())?),
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Flat => write!(f, "flat"),
            PriorSpec::Iso(v) => write!(f, "iso:{v}"),
            PriorSpec::Scaled(c) => write!(f, "scaled:{c}"),
            PriorSpec::Laplace(None) => write!(f, "laplace"),
            PriorSpec::Laplace(Some(b)) => write!(f, "laplace:{b}"),
        }
    }
}

impl FromStr for PriorSpec {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let positive = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| CliError::Config(format!("prior `{s}` needs a value")))?;
            match a.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                _ => config_err(format!("prior `{s}`: `{a}` is not a positive number")),
            }
        };
        match kind {
            "flat" if arg.is_none() => Ok(PriorSpec::Flat),
            "iso" => Ok(PriorSpec::Iso(positive(arg)?)),
            "scaled" => Ok(PriorSpec::Scaled(positive(arg)?)),
            "laplace" => match arg {
                None | Some("auto") => Ok(PriorSpec::Laplace(None)),
                a => Ok(PriorSpec::Laplace(Some(positive(a)?))),
            },
            _ => config_err(format!(
                "unknown prior `{s}` (expected flat, iso:V, scaled:C or laplace[:B])"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PGrid {
    Explicit(Vec<usize>),
    /// Multiples of `n`, rounded, at least 1.
    Ratio(Vec<f64>),
}

impl PGrid {
    pub fn resolve(&self, n: usize) -> Vec<usize> {
        match self {
            PGrid::Explicit(ps) => ps.clone(),
            PGrid::Ratio(rs) => rs
                .iter()
                .map(|r| ((r * n as f64).round() as usize).max(1))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => config_err(format!("unknown format `{s}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GaussianConjugate,
    GaussianUnknownNoise,
    Logistic,
}

impl FromStr for ModelKind {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-conjugate" => Ok(ModelKind::GaussianConjugate),
            "gaussian-unknown-noise" => Ok(ModelKind::GaussianUnknownNoise),
            "logistic" => Ok(ModelKind::Logistic),
            _ => config_err(format!(
                "unknown model `{s}` (expected gaussian-conjugate, gaussian-unknown-noise or logistic)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Fixed(f64),
    /// Evidence-maximizing noise variance.
    EmpiricalBayes,
}

/// How reference values of `log mu_i` are produced for non-conjugate models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthProtocol {
    /// `LooChains` below `AUTO_TRUTH_SWITCH` observations, else `MixtureChain`.
    Auto,
    /// One long chain on each leave-one-out posterior.
    LooChains,
    /// One long chain on the mixture.
    MixtureChain,
    None,
}

pub const AUTO_TRUTH_SWITCH: usize = 100;

impl FromStr for TruthProtocol {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(TruthProtocol::Auto),
            "loo-chains" => Ok(TruthProtocol::LooChains),
            "mixture-chain" => Ok(TruthProtocol::MixtureChain),
            "none" => Ok(TruthProtocol::None),
            _ => config_err(format!(
                "unknown truth protocol `{s}` (expected auto, loo-chains, mixture-chain or none)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub model: ModelKind,
    pub standardize: bool,
    pub noise: NoiseSpec,
    pub prior: PriorSpec,
    pub ig_shape: f64,
    pub ig_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthConfig {
    pub protocol: TruthProtocol,
    /// Total post-warmup draws per reference chain set.
    pub draws: usize,
    pub seed: Option<u64>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub design: Design,
    pub n: Vec<usize>,
    pub p: PGrid,
    pub sigma2: f64,
    /// Variance of the i.i.d. Gaussian design entries.
    pub tau2: f64,
    pub priors: Vec<PriorSpec>,
    /// Sample sizes `S`.
    pub draws: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    /// Subset size `K` for the gold and silver estimators.
    pub subsample_k: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: Option<usize>,
    /// Emit wall-clock rows. Off by default so output is reproducible.
    pub timing: bool,
    pub data: DataConfig,
    pub hmc: HmcConfig,
    pub truth: TruthConfig,
    echo: BTreeMap<String, String>,
}

/// Raw `section.key -> value` map prior to validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut raw = Self::new();
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                let full = match section {
                    Some(s) => format!("{s}.{key}"),
                    None => key.to_string(),
                };
                raw.set(&full, value)?;
            }
        }
        Ok(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return config_err(format!("unknown config key `{key}`"));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Parses a `section.key=value` override.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        match assignment.split_once('=') {
            Some((k, v)) => self.set(k, v),
            None => config_err(format!("override `{assignment}` is not of the form key=value")),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Applies the value of `LOOMIX_SEED`, if any.
    pub fn apply_seed_env(&mut self, env_value: Option<&str>) -> Result<()> {
        if let Some(v) = env_value {
            self.set("experiment.seed", v)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &RawConfig) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_raw(self)
    }
}

fn parse_scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return config_err(format!("`{key}` must not be empty"));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => config_err(format!("`{key}`: `{v}` is not a boolean")),
    }
}

fn parse_leapfrog(v: &str) -> Result<LeapfrogSteps> {
    let bad = || CliError::Config(format!("`hmc.leapfrog`: expected L or LO-HI, got `{v}`"));
    match v.split_once('-') {
        Some((lo, hi)) => Ok(LeapfrogSteps::Jittered {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
        }),
        None => Ok(LeapfrogSteps::Fixed(v.parse().map_err(|_| bad())?)),
    }
}

impl ExperimentConfig {
    fn from_raw(raw: &RawConfig) -> Result<Self> {
        let design: Design = raw
            .get("experiment.design")
            .ok_or_else(|| CliError::Config("`experiment.design` is required".into()))?
            .parse()?;

        let mut resolved = raw.values.clone();
        let has_p = resolved.contains_key("design.p") || resolved.contains_key("design.p_over_n");
        for (k, v) in design.defaults() {
            if (*k == "design.p" || *k == "design.p_over_n") && has_p {
                continue;
            }
            resolved.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        let generic: &[(&str, &str)] = &[
            ("experiment.seed", "0"),
            ("experiment.replicates", "1"),
            ("experiment.methods", "posterior,psis,mixture"),
            ("experiment.format", "json"),
            ("experiment.timing", "false"),
            ("design.sigma2", "1"),
            ("design.tau2", "1"),
            ("design.subsample_k", "10"),
            ("data.model", "gaussian-conjugate"),
            ("data.standardize", "false"),
            ("data.sigma2", "1"),
            ("data.ig_shape", "2"),
            ("data.ig_rate", "1"),
            ("hmc.warmup", "1000"),
            ("hmc.chains", "4"),
            ("hmc.target_accept", "0.8"),
            ("hmc.leapfrog", "16-48"),
            ("truth.protocol", "auto"),
            ("truth.draws", "100000"),
        ];
        for (k, v) in generic {
            resolved.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        let model: ModelKind = resolved["data.model"].parse()?;
        resolved.entry("data.prior".into()).or_insert_with(|| {
            match model {
                ModelKind::Logistic => "laplace",
                _ => "iso:10",
            }
            .into()
        });
        if design != Design::EstimateFile {
            resolved.entry("design.n".into()).or_insert_with(|| "100".into());
            resolved.entry("design.prior".into()).or_insert_with(|| "iso:10".into());
            if !resolved.contains_key("design.p") && !resolved.contains_key("design.p_over_n") {
                resolved.insert("design.p".into(), "10".into());
            }
        }
        let get = |k: &str| resolved.get(k).map(String::as_str);

        let n: Vec<usize> = match get("design.n") {
            Some(v) => parse_list("design.n", v)?,
            None => Vec::new(),
        };
        let p = match (get("design.p"), get("design.p_over_n")) {
            (Some(_), Some(_)) => {
                return config_err("set either `design.p` or `design.p_over_n`, not both")
            }
            (Some(v), None) => PGrid::Explicit(parse_list("design.p", v)?),
            (None, Some(v)) => PGrid::Ratio(parse_list("design.p_over_n", v)?),
            (None, None) => PGrid::Explicit(Vec::new()),
        };
        let priors: Vec<PriorSpec> = match get("design.prior") {
            Some(v) => parse_list("design.prior", v)?,
            None => Vec::new(),
        };
        let draws: Vec<usize> = parse_list("design.draws", get("design.draws").unwrap_or("2000"))?;
        let methods: Vec<Method> = get("experiment.methods")
            .unwrap()
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Method::parse(s).map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<_>>()?;

        let threads = match get("experiment.threads") {
            Some(v) => Some(parse_scalar::<usize>("experiment.threads", v)?),
            None => None,
        };
        let noise = match get("data.sigma2").unwrap() {
            "eb" => NoiseSpec::EmpiricalBayes,
            v => NoiseSpec::Fixed(parse_scalar("data.sigma2", v)?),
        };
        let hmc = HmcConfig {
            n_leapfrog: parse_leapfrog(get("hmc.leapfrog").unwrap())?,
            target_accept: parse_scalar("hmc.target_accept", get("hmc.target_accept").unwrap())?,
            warmup: parse_scalar("hmc.warmup", get("hmc.warmup").unwrap())?,
            draws: 2,
            n_chains: parse_scalar("hmc.chains", get("hmc.chains").unwrap())?,
            seed: 0,
            init: Init::Auto,
        };
        let truth = TruthConfig {
            protocol: get("truth.protocol").unwrap().parse()?,
            draws: parse_scalar("truth.draws", get("truth.draws").unwrap())?,
            seed: match get("truth.seed") {
                Some(v) => Some(parse_scalar("truth.seed", v)?),
                None => None,
            },
            cache: get("truth.cache").map(PathBuf::from),
        };
        let data = DataConfig {
            path: get("data.path").map(PathBuf::from),
            model,
            standardize: parse_bool("data.standardize", get("data.standardize").unwrap())?,
            noise,
            prior: get("data.prior").unwrap().parse()?,
            ig_shape: parse_scalar("data.ig_shape", get("data.ig_shape").unwrap())?,
            ig_rate: parse_scalar("data.ig_rate", get("data.ig_rate").unwrap())?,
        };

        let cfg = ExperimentConfig {
            design,
            n,
            p,
            sigma2: parse_scalar("design.sigma2", get("design.sigma2").unwrap())?,
            tau2: parse_scalar("design.tau2", get("design.tau2").unwrap())?,
            priors,
            draws,
            replicates: parse_scalar("experiment.replicates", get("experiment.replicates").unwrap())?,
            methods,
            subsample_k: parse_scalar("design.subsample_k", get("design.subsample_k").unwrap())?,
            seed: parse_scalar("experiment.seed", get("experiment.seed").unwrap())?,
            out: get("experiment.out").map(PathBuf::from),
            format: get("experiment.format").unwrap().parse()?,
            threads,
            timing: parse_bool("experiment.timing", get("experiment.timing").unwrap())?,
            data,
            hmc,
            truth,
            echo: resolved
                .iter()
                .filter(|(k, _)| k.as_str() != "experiment.threads")
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return config_err("`experiment.replicates` must be at least 1");
        }
        if self.methods.is_empty() {
            return config_err("`experiment.methods` must not be empty");
        }
        if self.methods.contains(&Method::Exact) {
            return config_err("`exact` is a reference value, not an estimator");
        }
        if self.draws.iter().any(|&s| s < 2) {
            return config_err("every sample size in `design.draws` must be at least 2");
        }
        if self.threads == Some(0) {
            return config_err("`experiment.threads` must be at least 1");
        }
        if !(self.tau2.is_finite() && self.tau2 > 0.0) {
            return config_err("`design.tau2` must be positive");
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return config_err("`design.sigma2` must be positive");
        }
        if self.subsample_k == 0 {
            return config_err("`design.subsample_k` must be at least 1");
        }
        if self.design == Design::EstimateFile {
            if self.data.path.is_none() {
                return config_err("`data.path` is required for estimate-file");
            }
            if let NoiseSpec::Fixed(s) = self.data.noise {
                if !(s.is_finite() && s > 0.0) {
                    return config_err("`data.sigma2` must be positive or `eb`");
                }
            }
            if self.truth.draws < 100 {
                return config_err("`truth.draws` must be at least 100");
            }
            let mut hmc = self.hmc.clone();
            hmc.draws = 2;
            hmc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        } else {
            if self.n.is_empty() || self.n.contains(&0) {
                return config_err("`design.n` must list positive sizes");
            }
            let ps_ok = match &self.p {
                PGrid::Explicit(ps) => !ps.is_empty() && !ps.contains(&0),
                PGrid::Ratio(rs) => !rs.is_empty() && rs.iter().all(|r| r.is_finite() && *r > 0.0),
            };
            if !ps_ok {
                return config_err("the p grid must be non-empty and positive");
            }
            if self.priors.is_empty() {
                return config_err("`design.prior` must not be empty");
            }
            if self.priors.iter().any(|p| matches!(p, PriorSpec::Laplace(_))) {
                return config_err("synthetic designs use the conjugate model; Laplace is not allowed");
            }
            if self.design != Design::Fig1Leverage
                && self.priors.contains(&PriorSpec::Flat)
            {
                return config_err("MSE designs need a proper prior to simulate parameters");
            }
        }
        Ok(())
    }

    /// Fully resolved `section.key -> value` map, defaults included. The
    /// thread count is left out since it never changes results.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.echo
    }
}
