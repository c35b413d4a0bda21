//! Synthetic-data experiments: the leverage census and the MSE studies.
//!
//! Every replicate owns the seed `derive_seed_path(seed, [cell, replicate])`,
//! where `cell` counts design points in emission order. Replicates run in
//! parallel and are reduced in index order, so output does not depend on the
//! thread count.

use std::time::Instant;

use loomix_core::conjugate::{GaussianLinearModel, MixtureExact};
use loomix_core::estimators::{
    bronze_estimate, gold_estimate, loo_estimate, mixture_estimate, posterior_estimate,
    psi_plugin, silver_estimate, EstimateRecord, Method,
};
use loomix_core::psis::psis_estimate;
use loomix_core::rng::{derive_seed, derive_seed_path};
use loomix_core::WeightedSampleSet;
use rayon::prelude::*;

use crate::config::{Design, ExperimentConfig, PriorSpec};
use crate::error::{config_err, Result};
use crate::estimate::estimate_file;
use crate::output::{Failure, Point, ResultTable};
use crate::synthetic::SyntheticDesign;

/// Quantiles reported by the leverage census.
pub const LEVERAGE_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Runs the design named in `cfg` on a pool of `cfg.threads` workers.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| crate::error::CliError::Config(e.to_string()))?;
    pool.install(|| match cfg.design {
        Design::Fig1Leverage => run_fig1(cfg),
        Design::Fig2MseGrid => run_fig2(cfg),
        Design::Fig3MseVsS => run_fig3(cfg),
        Design::EstimateFile => estimate_file(cfg),
    })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Ordinary least-squares slope of `log y` on `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

struct Cell {
    index: u64,
    design: SyntheticDesign,
    point: Point,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &n in &cfg.n {
        for p in cfg.p.resolve(n) {
            for prior in &cfg.priors {
                out.push(Cell {
                    index: out.len() as u64,
                    design: SyntheticDesign {
                        n,
                        p,
                        sigma2: cfg.sigma2,
                        tau2: cfg.tau2,
                        prior: *prior,
                    },
                    point: Point {
                        n: Some(n),
                        p: Some(p),
                        prior: Some(prior.to_string()),
                        ..Point::default()
                    },
                });
            }
        }
    }
    out
}

/// Leverage quantiles per `(n, p, prior)`, pooled over replicates and
/// observations. Flat-prior cells with `p >= n` are skipped and reported.
pub fn run_fig1(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mut table = ResultTable::new(cfg);
    for cell in cells(cfg) {
        let d = cell.design;
        if d.prior == PriorSpec::Flat && d.p >= d.n {
            table.failures.push(Failure {
                point: cell.point.clone(),
                method: Some("leverage".into()),
                replicate: None,
                reason: "skipped: a flat prior requires p < n".into(),
            });
            continue;
        }
        let start = Instant::now();
        let per_rep: Vec<loomix_core::Result<Vec<f64>>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let (model, _) = d.generate(derive_seed_path(cfg.seed, &[cell.index, r as u64]))?;
                model.leverages()
            })
            .collect();
        let mut pooled = Vec::with_capacity(cfg.replicates * d.n);
        for (r, lev) in per_rep.into_iter().enumerate() {
            match lev {
                Ok(l) => pooled.extend(l),
                Err(e) => table.failures.push(Failure {
                    point: cell.point.clone(),
                    method: Some("leverage".into()),
                    replicate: Some(r),
                    reason: e.to_string(),
                }),
            }
        }
        let pt = &cell.point;
        if pooled.is_empty() {
            table.push(pt, "leverage", "failures", cfg.replicates as f64);
            continue;
        }
        pooled.sort_by(f64::total_cmp);
        let count = pooled.len() as f64;
        table.push(pt, "leverage", "mean", pooled.iter().sum::<f64>() / count);
        for q in LEVERAGE_QUANTILES {
            table.push(pt, "leverage", &format!("q{:02}", (q * 100.0).round() as u32), quantile_sorted(&pooled, q));
        }
        let infinite = pooled.iter().filter(|&&h| h >= 0.5).count() as f64;
        table.push(pt, "leverage", "frac_ge_half", infinite / count);
        table.push(pt, "leverage", "failures", (cfg.replicates - pooled.len() / d.n) as f64);
        if cfg.timing {
            table.push(pt, "leverage", "runtime", start.elapsed().as_secs_f64());
        }
    }
    Ok(table)
}

/// MSE of log-estimates against `p/n` (one sample size per grid point).
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run_mse(cfg)
}

/// MSE against the sample size, plus log-log slopes per method.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.draws.len() < 2 {
        return config_err("fig3-mse-vs-S needs at least two sample sizes");
    }
    run_mse(cfg)
}

/// Outcome of one method on one replicate at one sample size.
#[derive(Debug, Clone, Default)]
struct MethodOutcome {
    /// `(log mu_hat_i - log mu_i)^2`; empty for the subsampling estimators.
    sq_err: Vec<f64>,
    /// Observations whose estimate was not finite.
    failed_obs: Vec<usize>,
    psi_sq_err: f64,
    mean_ess: Option<f64>,
    khat_frac: Option<f64>,
    runtime: f64,
    error: Option<String>,
}

impl MethodOutcome {
    fn from_records(records: &[EstimateRecord], truth: &[f64], psi_true: f64) -> Self {
        let mut out = MethodOutcome::default();
        for (rec, t) in records.iter().zip(truth) {
            if rec.log_mu_hat.is_finite() {
                let d = rec.log_mu_hat - t;
                out.sq_err.push(d * d);
            } else {
                out.failed_obs.push(rec.i);
            }
        }
        out.psi_sq_err = match psi_plugin(records) {
            Ok(psi) if psi.value.is_finite() => (psi.value - psi_true).powi(2),
            _ => f64::NAN,
        };
        out.mean_ess = Some(records.iter().map(|r| r.is_ess).sum::<f64>() / records.len() as f64);
        out
    }

    fn from_psi(value: f64, psi_true: f64) -> Self {
        MethodOutcome {
            psi_sq_err: if value.is_finite() { (value - psi_true).powi(2) } else { f64::NAN },
            ..Default::default()
        }
    }

    fn failed(msg: String) -> Self {
        MethodOutcome {
            psi_sq_err: f64::NAN,
            error: Some(msg),
            ..Default::default()
        }
    }
}

fn per_obs(method: Method) -> bool {
    !matches!(method, Method::Gold | Method::Silver)
}

struct Replicate<'a> {
    cfg: &'a ExperimentConfig,
    model: GaussianLinearModel,
    truth: Vec<f64>,
    psi_true: f64,
    mixture: Option<MixtureExact>,
    seed: u64,
}

impl Replicate<'_> {
    fn sizes(&self, si: usize) -> u64 {
        derive_seed_path(self.seed, &[1, si as u64])
    }

    fn run(&self, si: usize, s: usize) -> Vec<MethodOutcome> {
        let sseed = self.sizes(si);
        let needs_post = self
            .cfg
            .methods
            .iter()
            .any(|m| matches!(m, Method::Posterior | Method::Psis));
        let mut post: Option<(loomix_core::Result<WeightedSampleSet>, f64)> = None;
        if needs_post {
            let t = Instant::now();
            let set = self.model.sample_posterior_iid(s, derive_seed(sseed, 1));
            post = Some((set, t.elapsed().as_secs_f64()));
        }
        self.cfg
            .methods
            .iter()
            .map(|&m| {
                let t = Instant::now();
                let mut extra = 0.0;
                let res = match m {
                    Method::Posterior | Method::Psis => {
                        let (set, dt) = post.as_ref().unwrap();
                        extra = *dt;
                        match set {
                            Ok(set) => self.posterior_side(m, set),
                            Err(e) => Err(e.to_string()),
                        }
                    }
                    _ => self.other(m, s, sseed),
                };
                let mut out = res.unwrap_or_else(MethodOutcome::failed);
                out.runtime = t.elapsed().as_secs_f64() + extra;
                out
            })
            .collect()
    }

    fn posterior_side(&self, m: Method, set: &WeightedSampleSet) -> std::result::Result<MethodOutcome, String> {
        if m == Method::Posterior {
            let rec = posterior_estimate(set);
            return Ok(MethodOutcome::from_records(&rec, &self.truth, self.psi_true));
        }
        let ps = psis_estimate(set).map_err(|e| e.to_string())?;
        let mut out = MethodOutcome::from_records(&ps.records, &self.truth, self.psi_true);
        out.khat_frac = Some(ps.khat_fraction);
        Ok(out)
    }

    fn other(&self, m: Method, s: usize, sseed: u64) -> std::result::Result<MethodOutcome, String> {
        let n = self.model.data().n();
        let k = self.cfg.subsample_k.min(n);
        let err = |e: loomix_core::Error| e.to_string();
        let records = match m {
            Method::Mixture => {
                let mix = self.mixture.as_ref().expect("mixture prepared");
                let set = self.model.sample_mixture_iid(mix, s, derive_seed(sseed, 2)).map_err(err)?;
                mixture_estimate(&set, &vec![1.0; n]).map_err(err)?.records
            }
            Method::Bronze => {
                let set = self.model.sample_bronze_iid(s, derive_seed(sseed, 3)).map_err(err)?;
                bronze_estimate(&set)
            }
            Method::Loo => {
                let sets = (0..n)
                    .map(|i| self.model.sample_loo_iid(i, s, derive_seed_path(sseed, &[4, i as u64])))
                    .collect::<loomix_core::Result<Vec<_>>>()
                    .map_err(err)?;
                loo_estimate(&sets).map_err(err)?
            }
            Method::Gold => {
                let psi = gold_estimate(&self.truth, k, derive_seed(sseed, 5)).map_err(err)?;
                return Ok(MethodOutcome::from_psi(psi.value, self.psi_true));
            }
            Method::Silver => {
                let psi = silver_estimate(n, k, s, derive_seed(sseed, 6), |i, d, sd| {
                    self.model.sample_loo_iid(i, d, sd)
                })
                .map_err(err)?;
                return Ok(MethodOutcome::from_psi(psi.value, self.psi_true));
            }
            Method::Posterior | Method::Psis | Method::Exact => unreachable!(),
        };
        Ok(MethodOutcome::from_records(&records, &self.truth, self.psi_true))
    }
}

/// `[size][method]` outcomes of one replicate, or the reason it failed.
fn run_replicate(
    cfg: &ExperimentConfig,
    design: &SyntheticDesign,
    seed: u64,
) -> std::result::Result<Vec<Vec<MethodOutcome>>, String> {
    let (model, _) = design.generate(derive_seed(seed, 0)).map_err(|e| e.to_string())?;
    let truth = model.log_loo_predictives().map_err(|e| e.to_string())?;
    let psi_true = truth.iter().sum();
    let mixture = if cfg.methods.contains(&Method::Mixture) {
        Some(model.mixture_exact_uniform().map_err(|e| e.to_string())?)
    } else {
        None
    };
    let rep = Replicate {
        cfg,
        model,
        truth,
        psi_true,
        mixture,
        seed,
    };
    Ok(cfg
        .draws
        .iter()
        .enumerate()
        .map(|(si, &s)| rep.run(si, s))
        .collect())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn run_mse(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mut table = ResultTable::new(cfg);
    for cell in cells(cfg) {
        let reps: Vec<_> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &cell.design, derive_seed_path(cfg.seed, &[cell.index, r as u64])))
            .collect();
        let mut mse_by_method: Vec<Vec<f64>> = vec![Vec::new(); cfg.methods.len()];
        for (si, &s) in cfg.draws.iter().enumerate() {
            let point = Point {
                s: Some(s),
                ..cell.point.clone()
            };
            for (mi, &m) in cfg.methods.iter().enumerate() {
                let name = m.name();
                let mut fails = 0usize;
                let mut outcomes = Vec::new();
                for (r, rep) in reps.iter().enumerate() {
                    let reason = match rep {
                        Err(e) => Some(e.clone()),
                        Ok(per_s) => {
                            let o = &per_s[si][mi];
                            match &o.error {
                                Some(e) => Some(e.clone()),
                                None => {
                                    for &i in &o.failed_obs {
                                        fails += 1;
                                        table.failures.push(Failure {
                                            point: Point {
                                                obs: Some(i),
                                                ..point.clone()
                                            },
                                            method: Some(name.into()),
                                            replicate: Some(r),
                                            reason: "non-finite estimate".into(),
                                        });
                                    }
                                    outcomes.push(o);
                                    None
                                }
                            }
                        }
                    };
                    if let Some(reason) = reason {
                        fails += 1;
                        table.failures.push(Failure {
                            point: point.clone(),
                            method: Some(name.into()),
                            replicate: Some(r),
                            reason,
                        });
                    }
                }
                if per_obs(m) {
                    let used: Vec<_> = outcomes.iter().filter(|o| !o.sq_err.is_empty()).collect();
                    let mse = mean(used.iter().map(|o| mean(o.sq_err.iter().copied())));
                    let mse_max = mean(used.iter().map(|o| o.sq_err.iter().copied().fold(f64::MIN, f64::max)));
                    table.push(&point, name, "mse_mean", mse);
                    table.push(&point, name, "mse_max", mse_max);
                    table.push(&point, name, "is_ess_mean", mean(outcomes.iter().filter_map(|o| o.mean_ess)));
                    mse_by_method[mi].push(mse);
                }
                if m == Method::Psis {
                    table.push(&point, name, "khat_frac", mean(outcomes.iter().filter_map(|o| o.khat_frac)));
                }
                let psi = mean(outcomes.iter().map(|o| o.psi_sq_err).filter(|v| v.is_finite()));
                table.push(&point, name, "psi_mse", psi);
                table.push(&point, name, "failures", fails as f64);
                if cfg.timing {
                    table.push(&point, name, "runtime", outcomes.iter().map(|o| o.runtime).sum());
                }
            }
        }
        if cfg.draws.len() >= 2 {
            let s: Vec<f64> = cfg.draws.iter().map(|&v| v as f64).collect();
            for (mi, &m) in cfg.methods.iter().enumerate() {
                if per_obs(m) {
                    table.push(&cell.point, m.name(), "slope", loglog_slope(&s, &mse_by_method[mi]));
                }
            }
        }
    }
    Ok(table)
}
