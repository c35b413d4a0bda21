//! Estimation on a user-supplied CSV dataset.
//!
//! Conjugate Gaussian models are sampled exactly and compared against exact
//! values. The other models are sampled by HMC, and their reference values
//! come from long chains: one per leave-one-out posterior below
//! [`AUTO_TRUTH_SWITCH`] observations, otherwise a single mixture chain.

use std::path::Path;
use std::time::Instant;

use loomix_core::conjugate::{empirical_bayes_sigma2, GaussianLinearModel, MixtureExact};
use loomix_core::estimators::{
    bronze_estimate, gold_estimate, loo_estimate, mixture_estimate, posterior_estimate,
    psi_plugin, silver_estimate, EstimateRecord, Method,
};
use loomix_core::glm::{GaussianUnknownNoiseModel, LogisticModel};
use loomix_core::hmc::{run_hmc, ChainDiagnostics, HmcConfig};
use loomix_core::psis::psis_estimate;
use loomix_core::rng::derive_seed;
use loomix_core::{log_sum_exp, Dataset, PointwiseModel, TargetDensity, TargetKind, WeightedSampleSet};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ModelKind, NoiseSpec, TruthProtocol, AUTO_TRUTH_SWITCH};
use crate::error::{config_err, CliError, Result};
use crate::output::{Failure, Point, ResultTable};

/// Independent random streams of one estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Posterior = 1,
    Mixture = 2,
    Bronze = 3,
    Loo = 4,
    Gold = 5,
    Silver = 6,
    Truth = 7,
}

pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    derive_seed(seed, stream as u64)
}

pub enum FileModel {
    Conjugate(Box<GaussianLinearModel>),
    Logistic(LogisticModel),
    UnknownNoise(GaussianUnknownNoiseModel),
}

impl FileModel {
    pub fn pointwise(&self) -> &dyn PointwiseModel {
        match self {
            FileModel::Conjugate(m) => m.as_ref(),
            FileModel::Logistic(m) => m,
            FileModel::UnknownNoise(m) => m,
        }
    }

    pub fn conjugate(&self) -> Option<&GaussianLinearModel> {
        match self {
            FileModel::Conjugate(m) => Some(m),
            _ => None,
        }
    }
}

/// Reads the CSV at `path` and builds the configured model.
pub fn load_model(cfg: &ExperimentConfig, path: &Path) -> Result<FileModel> {
    let mut data = Dataset::from_csv_path(path)?;
    let d = &cfg.data;
    if d.standardize {
        data.standardize(d.model != ModelKind::Logistic);
    }
    let p = data.p();
    Ok(match d.model {
        ModelKind::GaussianConjugate => {
            let prior = d.prior.covariance(p)?;
            let theta0 = DVector::zeros(p);
            let sigma2 = match d.noise {
                NoiseSpec::Fixed(s) => s,
                NoiseSpec::EmpiricalBayes => empirical_bayes_sigma2(&data, &theta0, &prior, false)?,
            };
            FileModel::Conjugate(Box::new(GaussianLinearModel::new(data, sigma2, theta0, prior)?))
        }
        ModelKind::Logistic => {
            if !data.is_binary() {
                return Err(loomix_core::Error::Data("logistic model needs 0/1 responses".into()).into());
            }
            FileModel::Logistic(LogisticModel::new(data, d.prior.coordinate(p)?)?)
        }
        ModelKind::GaussianUnknownNoise => FileModel::UnknownNoise(GaussianUnknownNoiseModel::new(
            data,
            d.prior.coordinate(p)?,
            d.ig_shape,
            d.ig_rate,
        )?),
    })
}

/// HMC settings for `total` draws split over the configured chains.
fn hmc_for(cfg: &ExperimentConfig, total: usize, seed: u64) -> HmcConfig {
    HmcConfig {
        draws: total.div_ceil(cfg.hmc.n_chains).max(2),
        seed,
        ..cfg.hmc.clone()
    }
}

/// `total` post-warmup HMC draws from `kind`, with chain diagnostics.
pub fn hmc_draws(
    cfg: &ExperimentConfig,
    model: &dyn PointwiseModel,
    kind: TargetKind,
    total: usize,
    seed: u64,
) -> loomix_core::Result<(WeightedSampleSet, ChainDiagnostics)> {
    let target = TargetDensity::new(model, kind)?;
    let out = run_hmc(&target, &hmc_for(cfg, total, seed))?;
    let set = if out.samples.n_draws() > total {
        out.samples.truncated(total)?
    } else {
        out.samples
    };
    Ok((set, out.diagnostics))
}

/// Reference `log mu_i` values and how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub label: String,
    pub log_mu: Vec<f64>,
    /// Largest R-hat over the reference chains; `None` when exact.
    pub rhat_max: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    reference: Reference,
}

fn resolve_protocol(cfg: &ExperimentConfig, n: usize) -> TruthProtocol {
    match cfg.truth.protocol {
        TruthProtocol::Auto if n < AUTO_TRUTH_SWITCH => TruthProtocol::LooChains,
        TruthProtocol::Auto => TruthProtocol::MixtureChain,
        other => other,
    }
}

fn truth_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.truth.seed.unwrap_or_else(|| stream_seed(cfg.seed, Stream::Truth))
}

fn cache_key(cfg: &ExperimentConfig, csv_bytes: &[u8], protocol: TruthProtocol) -> String {
    let d = &cfg.data;
    let mut h = Sha256::new();
    h.update(csv_bytes);
    h.update(
        format!(
            "{:?}|{}|{}|{:?}|{}|{}|{:?}|{}|{}|{:?}",
            d.model,
            d.prior,
            d.standardize,
            d.noise,
            d.ig_shape,
            d.ig_rate,
            protocol,
            cfg.truth.draws,
            truth_seed(cfg),
            cfg.hmc,
        )
        .as_bytes(),
    );
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Long-run reference values; exact for the conjugate model.
pub fn reference_values(cfg: &ExperimentConfig, model: &FileModel) -> loomix_core::Result<Reference> {
    if let Some(m) = model.conjugate() {
        return Ok(Reference {
            label: Method::Exact.name().into(),
            log_mu: m.log_loo_predictives()?,
            rhat_max: None,
        });
    }
    let pw = model.pointwise();
    let n = pw.n_obs();
    let seed = truth_seed(cfg);
    let total = cfg.truth.draws;
    match resolve_protocol(cfg, n) {
        TruthProtocol::LooChains => {
            let per_i: Vec<loomix_core::Result<(f64, f64)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let (set, diag) =
                        hmc_draws(cfg, pw, TargetKind::LeaveOneOut(i), total, derive_seed(seed, i as u64))?;
                    let log_mu = log_sum_exp(set.loglik_row(i)) - (set.n_draws() as f64).ln();
                    Ok((log_mu, diag.max_rhat()))
                })
                .collect();
            let mut log_mu = Vec::with_capacity(n);
            let mut rhat = f64::NAN;
            for r in per_i {
                let (l, h) = r?;
                log_mu.push(l);
                rhat = rhat.max(h);
            }
            Ok(Reference {
                label: "reference".into(),
                log_mu,
                rhat_max: Some(rhat),
            })
        }
        TruthProtocol::MixtureChain => {
            let (set, diag) = hmc_draws(cfg, pw, TargetKind::mixture_uniform(n), total, seed)?;
            let est = mixture_estimate(&set, &vec![1.0; n])?;
            Ok(Reference {
                label: "reference".into(),
                log_mu: est.records.iter().map(|r| r.log_mu_hat).collect(),
                rhat_max: Some(diag.max_rhat()),
            })
        }
        TruthProtocol::Auto | TruthProtocol::None => unreachable!(),
    }
}

/// [`reference_values`], read from or written to `truth.cache` when set.
fn cached_reference(cfg: &ExperimentConfig, model: &FileModel, csv_bytes: &[u8]) -> Result<Option<Reference>> {
    let n = model.pointwise().n_obs();
    let protocol = resolve_protocol(cfg, n);
    if model.conjugate().is_none() && protocol == TruthProtocol::None {
        return Ok(None);
    }
    let Some(path) = &cfg.truth.cache else {
        return Ok(Some(reference_values(cfg, model)?));
    };
    let key = cache_key(cfg, csv_bytes, protocol);
    if let Ok(text) = std::fs::read_to_string(path) {
        if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
            if entry.key == key && entry.reference.log_mu.len() == n {
                return Ok(Some(entry.reference));
            }
        }
    }
    let reference = reference_values(cfg, model)?;
    let entry = CacheEntry {
        key,
        reference: reference.clone(),
    };
    let text = serde_json::to_string(&entry).map_err(|e| CliError::Output(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(Some(reference))
}

struct MethodResult {
    records: Vec<EstimateRecord>,
    psi: f64,
    khat_frac: Option<f64>,
    diagnostics: Option<ChainDiagnostics>,
}

impl MethodResult {
    fn per_obs(records: Vec<EstimateRecord>, diagnostics: Option<ChainDiagnostics>) -> loomix_core::Result<Self> {
        let psi = psi_plugin(&records)?.value;
        Ok(Self {
            records,
            psi,
            khat_frac: None,
            diagnostics,
        })
    }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a FileModel,
    s: usize,
    reference: Option<&'a Reference>,
    mixture: Option<MixtureExact>,
}

impl Runner<'_> {
    fn seed(&self, stream: Stream) -> u64 {
        stream_seed(self.cfg.seed, stream)
    }

    fn draws(&self, kind: TargetKind, seed: u64) -> loomix_core::Result<(WeightedSampleSet, Option<ChainDiagnostics>)> {
        self.draws_n(kind, self.s, seed)
    }

    fn draws_n(
        &self,
        kind: TargetKind,
        s: usize,
        seed: u64,
    ) -> loomix_core::Result<(WeightedSampleSet, Option<ChainDiagnostics>)> {
        match self.model {
            FileModel::Conjugate(m) => {
                let set = match kind {
                    TargetKind::Posterior => m.sample_posterior_iid(s, seed)?,
                    TargetKind::Mixture { .. } => {
                        m.sample_mixture_iid(self.mixture.as_ref().expect("mixture prepared"), s, seed)?
                    }
                    TargetKind::Bronze => m.sample_bronze_iid(s, seed)?,
                    TargetKind::LeaveOneOut(i) => m.sample_loo_iid(i, s, seed)?,
                };
                Ok((set, None))
            }
            other => {
                let (set, diag) = hmc_draws(self.cfg, other.pointwise(), kind, s, seed)?;
                Ok((set, Some(diag)))
            }
        }
    }

    fn run(&self, method: Method, posterior: &mut Option<(WeightedSampleSet, Option<ChainDiagnostics>)>) -> loomix_core::Result<MethodResult> {
        let n = self.model.pointwise().n_obs();
        let k = self.cfg.subsample_k.min(n);
        match method {
            Method::Posterior | Method::Psis => {
                if posterior.is_none() {
                    *posterior = Some(self.draws(TargetKind::Posterior, self.seed(Stream::Posterior))?);
                }
                let (set, diag) = posterior.as_ref().unwrap();
                if method == Method::Posterior {
                    MethodResult::per_obs(posterior_estimate(set), diag.clone())
                } else {
                    let ps = psis_estimate(set)?;
                    let mut out = MethodResult::per_obs(ps.records, diag.clone())?;
                    out.khat_frac = Some(ps.khat_fraction);
                    Ok(out)
                }
            }
            Method::Mixture => {
                let (set, diag) = self.draws(TargetKind::mixture_uniform(n), self.seed(Stream::Mixture))?;
                MethodResult::per_obs(mixture_estimate(&set, &vec![1.0; n])?.records, diag)
            }
            Method::Bronze => {
                let (set, diag) = self.draws(TargetKind::Bronze, self.seed(Stream::Bronze))?;
                MethodResult::per_obs(bronze_estimate(&set), diag)
            }
            Method::Loo => {
                let base = self.seed(Stream::Loo);
                let sets = (0..n)
                    .map(|i| Ok(self.draws(TargetKind::LeaveOneOut(i), derive_seed(base, i as u64))?.0))
                    .collect::<loomix_core::Result<Vec<_>>>()?;
                MethodResult::per_obs(loo_estimate(&sets)?, None)
            }
            Method::Gold => {
                let reference = self.reference.ok_or_else(|| {
                    loomix_core::Error::Input("the gold estimator needs reference values".into())
                })?;
                let psi = gold_estimate(&reference.log_mu, k, self.seed(Stream::Gold))?;
                Ok(MethodResult {
                    records: Vec::new(),
                    psi: psi.value,
                    khat_frac: None,
                    diagnostics: None,
                })
            }
            Method::Silver => {
                let psi = silver_estimate(n, k, self.s, self.seed(Stream::Silver), |i, d, seed| {
                    Ok(self.draws_n(TargetKind::LeaveOneOut(i), d, seed)?.0)
                })?;
                Ok(MethodResult {
                    records: Vec::new(),
                    psi: psi.value,
                    khat_frac: None,
                    diagnostics: None,
                })
            }
            Method::Exact => Err(loomix_core::Error::Input("`exact` is not an estimator".into())),
        }
    }
}

/// Runs the configured estimators on the CSV at `data.path`.
pub fn estimate_file(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let Some(path) = &cfg.data.path else {
        return config_err("`data.path` is required for estimate-file");
    };
    if cfg.draws.len() != 1 {
        return config_err("estimate-file takes a single sample size in `design.draws`");
    }
    let csv_bytes = std::fs::read(path)
        .map_err(|e| loomix_core::Error::Data(format!("{}: {e}", path.display())))?;
    let model = load_model(cfg, path)?;
    let pw = model.pointwise();
    let (n, p) = (pw.n_obs(), model_p(&model));
    let s = cfg.draws[0];
    let reference = cached_reference(cfg, &model, &csv_bytes)?;

    let mut table = ResultTable::new(cfg);
    let base = Point {
        n: Some(n),
        p: Some(p),
        prior: Some(cfg.data.prior.to_string()),
        ..Point::default()
    };
    if let Some(r) = &reference {
        for (i, v) in r.log_mu.iter().enumerate() {
            table.push(&Point { obs: Some(i), ..base.clone() }, &r.label, "log_mu", *v);
        }
        table.push(&base, &r.label, "psi", r.log_mu.iter().sum());
        if let Some(h) = r.rhat_max {
            table.push(&base, &r.label, "rhat_max", h);
        }
    }

    let mixture = match (&model, cfg.methods.contains(&Method::Mixture)) {
        (FileModel::Conjugate(m), true) => Some(m.mixture_exact_uniform()?),
        _ => None,
    };
    let runner = Runner {
        cfg,
        model: &model,
        s,
        reference: reference.as_ref(),
        mixture,
    };
    let point = Point { s: Some(s), ..base };
    let mut posterior = None;
    for &m in &cfg.methods {
        let name = m.name();
        let start = Instant::now();
        let res = match runner.run(m, &mut posterior) {
            Ok(r) => r,
            Err(e @ loomix_core::Error::Input(_)) => return Err(e.into()),
            Err(e) => {
                table.failures.push(Failure {
                    point: point.clone(),
                    method: Some(name.into()),
                    replicate: None,
                    reason: e.to_string(),
                });
                table.push(&point, name, "failures", 1.0);
                continue;
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let mut fails = 0usize;
        let mut sq = Vec::new();
        for rec in &res.records {
            let pt = Point { obs: Some(rec.i), ..point.clone() };
            table.push(&pt, name, "log_mu_hat", rec.log_mu_hat);
            table.push(&pt, name, "is_ess", rec.is_ess);
            if let Some(k) = rec.khat {
                table.push(&pt, name, "khat", k);
            }
            if !rec.log_mu_hat.is_finite() {
                fails += 1;
                table.failures.push(Failure {
                    point: pt.clone(),
                    method: Some(name.into()),
                    replicate: None,
                    reason: "non-finite estimate".into(),
                });
            } else if let Some(r) = &reference {
                let e = (rec.log_mu_hat - r.log_mu[rec.i]).powi(2);
                table.push(&pt, name, "sq_err", e);
                sq.push(e);
            }
        }
        table.push(&point, name, "psi", res.psi);
        if !sq.is_empty() {
            table.push(&point, name, "mse_mean", sq.iter().sum::<f64>() / sq.len() as f64);
            table.push(&point, name, "mse_max", sq.iter().copied().fold(f64::MIN, f64::max));
        }
        if let Some(k) = res.khat_frac {
            table.push(&point, name, "khat_frac", k);
        }
        if let Some(d) = &res.diagnostics {
            table.push(&point, name, "rhat_max", d.max_rhat());
            table.push(&point, name, "accept_rate", d.accept_rate);
            table.push(&point, name, "divergences", d.divergence_count as f64);
        }
        table.push(&point, name, "failures", fails as f64);
        if cfg.timing {
            table.push(&point, name, "runtime", elapsed);
        }
    }
    Ok(table)
}

fn model_p(model: &FileModel) -> usize {
    match model {
        FileModel::Conjugate(m) => m.data().p(),
        FileModel::Logistic(m) => m.data().p(),
        FileModel::UnknownNoise(m) => m.data().p(),
    }
}
