//! Estimators of `log p(y_i | y_{-i})` and of the LOO-CV score
//! `psi = sum_i log p(y_i | y_{-i})`.
//!
//! All arithmetic stays on the log scale. Each estimator costs `Θ(nS)`.

use rand::seq::index::sample as sample_indices;
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::lse::{log_sum_exp, LogSumExp};
use crate::model::WeightedSampleSet;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Loo,
    Posterior,
    Mixture,
    Psis,
    Bronze,
    Gold,
    Silver,
    Exact,
}

impl Method {
    pub const ESTIMATORS: [Method; 7] = [
        Method::Loo,
        Method::Posterior,
        Method::Mixture,
        Method::Psis,
        Method::Bronze,
        Method::Gold,
        Method::Silver,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Loo => "loo",
            Method::Posterior => "posterior",
            Method::Mixture => "mixture",
            Method::Psis => "psis",
            Method::Bronze => "bronze",
            Method::Gold => "gold",
            Method::Silver => "silver",
            Method::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ESTIMATORS
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Input(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Estimate of `log mu_i` for one observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub i: usize,
    pub log_mu_hat: f64,
    pub method: Method,
    /// Effective sample size of the importance weights, in `[1, S]`.
    pub is_ess: f64,
    pub khat: Option<f64>,
    pub empirical_av: Option<f64>,
    /// Set when an infinite importance weight forced `log_mu_hat = -inf`.
    pub degenerate: bool,
}

impl EstimateRecord {
    fn new(i: usize, method: Method, log_mu_hat: f64, is_ess: f64) -> Self {
        Self {
            i,
            log_mu_hat,
            method,
            is_ess,
            khat: None,
            empirical_av: None,
            degenerate: false,
        }
    }

    fn degenerate(i: usize, method: Method) -> Self {
        Self {
            degenerate: true,
            ..Self::new(i, method, f64::NEG_INFINITY, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiEstimate {
    pub value: f64,
    pub method: Method,
    /// Empty for the subsampling estimators.
    pub per_obs: Vec<EstimateRecord>,
    pub degenerate: bool,
    /// Draws left unused by the silver budget split.
    pub discarded_draws: usize,
}

/// Output of [`mixture_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureEstimate {
    pub records: Vec<EstimateRecord>,
    /// Implied mixture probabilities `pi_i`.
    pub pi_hat: Vec<f64>,
}

/// `(sum w)^2 / sum w^2` from log-weights, clamped to `[1, S]`.
pub fn is_ess(log_weights: &[f64]) -> Result<f64> {
    let s = log_weights.len() as f64;
    let n_inf = log_weights.iter().filter(|w| **w == f64::INFINITY).count();
    if n_inf > 0 {
        return Ok(n_inf as f64);
    }
    let first = log_sum_exp(log_weights);
    if first == f64::NEG_INFINITY {
        return input("importance weights are all zero");
    }
    let second = log_weights.iter().map(|w| 2.0 * w).collect::<LogSumExp>().value();
    Ok((2.0 * first - second).exp().clamp(1.0, s))
}

fn ln_s(samples: &WeightedSampleSet) -> f64 {
    (samples.n_draws() as f64).ln()
}

/// Brute-force estimator from `n` sample sets, set `i` drawn from
/// `p(theta | y_{-i})`: `log mu_i = LSE_s(l_is) - log S`.
pub fn loo_estimate(samples_per_i: &[WeightedSampleSet]) -> Result<Vec<EstimateRecord>> {
    let n = samples_per_i.len();
    samples_per_i
        .iter()
        .enumerate()
        .map(|(i, set)| {
            if set.n_obs() != n {
                return input(format!(
                    "sample set {i} covers {} observations, expected {n}",
                    set.n_obs()
                ));
            }
            let value = log_sum_exp(set.loglik_row(i)) - ln_s(set);
            Ok(EstimateRecord::new(i, Method::Loo, value, set.n_draws() as f64))
        })
        .collect()
}

/// Classical (harmonic mean) estimator from posterior draws:
/// `log mu_i = log S - LSE_s(-l_is)`.
pub fn posterior_estimate(samples: &WeightedSampleSet) -> Vec<EstimateRecord> {
    let mut lw = vec![0.0; samples.n_draws()];
    (0..samples.n_obs())
        .map(|i| {
            let row = samples.loglik_row(i);
            if row.contains(&f64::NEG_INFINITY) {
                return EstimateRecord::degenerate(i, Method::Posterior);
            }
            for (w, l) in lw.iter_mut().zip(row) {
                *w = -l;
            }
            let value = ln_s(samples) - log_sum_exp(&lw);
            let ess = is_ess(&lw).expect("finite log-weights");
            EstimateRecord::new(i, Method::Posterior, value, ess)
        })
        .collect()
}

/// Mixture estimator from draws of the `alpha`-weighted mixture of
/// leave-one-out posteriors.
///
/// With `z_s = LSE_i(log alpha_i - l_is)` and `w_is = log alpha_i - l_is - z_s`
/// (so `sum_i exp(w_is) = 1`),
/// `log mu_i = log alpha_i + LSE_s(-z_s) - LSE_s(w_is)`.
pub fn mixture_estimate(samples: &WeightedSampleSet, alpha: &[f64]) -> Result<MixtureEstimate> {
    let n = samples.n_obs();
    let s = samples.n_draws();
    if alpha.len() != n {
        return input(format!("need {n} mixture weights, got {}", alpha.len()));
    }
    if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return input("mixture weights must be strictly positive and finite");
    }
    let log_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();

    // Column pass: z_s, with special handling of draws where some l_is = -inf
    // (those observations then carry all of the responsibility).
    let mut z = vec![0.0; s];
    let mut vanished: Vec<Vec<usize>> = vec![Vec::new(); s];
    let mut acc: Vec<LogSumExp> = vec![LogSumExp::default(); s];
    for i in 0..n {
        for (k, l) in samples.loglik_row(i).iter().enumerate() {
            if *l == f64::NEG_INFINITY {
                vanished[k].push(i);
            } else {
                acc[k].push(log_alpha[i] - l);
            }
        }
    }
    for k in 0..s {
        z[k] = if vanished[k].is_empty() {
            acc[k].value()
        } else {
            f64::INFINITY
        };
    }
    let z_total: f64 = z.iter().map(|v| -v).collect::<LogSumExp>().value();

    let mut w = vec![0.0; s];
    let mut records = Vec::with_capacity(n);
    let mut pi_hat = Vec::with_capacity(n);
    for i in 0..n {
        let row = samples.loglik_row(i);
        for k in 0..s {
            w[k] = if vanished[k].is_empty() {
                log_alpha[i] - row[k] - z[k]
            } else if vanished[k].contains(&i) {
                let total: f64 = vanished[k].iter().map(|&j| alpha[j]).sum();
                (alpha[i] / total).ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        let lse_w = log_sum_exp(&w);
        pi_hat.push((lse_w - (s as f64).ln()).exp());
        if lse_w == f64::NEG_INFINITY {
            records.push(EstimateRecord::degenerate(i, Method::Mixture));
            continue;
        }
        let value = log_alpha[i] + z_total - lse_w;
        records.push(EstimateRecord::new(i, Method::Mixture, value, is_ess(&w)?));
    }
    Ok(MixtureEstimate { records, pi_hat })
}

/// Self-normalized weights from mixture draws: `w[i][s]` is the
/// responsibility of component `i` for draw `s`.
pub fn mixture_weights(samples: &WeightedSampleSet, alpha: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = samples.n_obs();
    if alpha.len() != n {
        return input(format!("need {n} mixture weights, got {}", alpha.len()));
    }
    let mut out = vec![vec![0.0; samples.n_draws()]; n];
    let mut col = vec![0.0; n];
    for k in 0..samples.n_draws() {
        for i in 0..n {
            col[i] = alpha[i].ln() - samples.loglik(i, k);
        }
        let z = log_sum_exp(&col);
        for i in 0..n {
            out[i][k] = if z == f64::INFINITY {
                if col[i] == f64::INFINITY {
                    1.0 / col.iter().filter(|c| **c == f64::INFINITY).count() as f64
                } else {
                    0.0
                }
            } else {
                (col[i] - z).exp()
            };
        }
    }
    Ok(out)
}

/// Self-normalized importance sampling from the tempered posterior
/// `p(theta) prod_j p(y_j|theta)^((n-1)/n)` to each `p(theta | y_{-i})`.
/// Log-weights are `(1/n) sum_j l_js - l_is`.
pub fn bronze_estimate(samples: &WeightedSampleSet) -> Vec<EstimateRecord> {
    let n = samples.n_obs();
    let s = samples.n_draws();
    let mut mean = vec![0.0; s];
    for i in 0..n {
        for (m, l) in mean.iter_mut().zip(samples.loglik_row(i)) {
            *m += l / n as f64;
        }
    }
    let mut lw = vec![0.0; s];
    let mut lwl = vec![0.0; s];
    (0..n)
        .map(|i| {
            let row = samples.loglik_row(i);
            if row.contains(&f64::NEG_INFINITY) {
                return EstimateRecord::degenerate(i, Method::Bronze);
            }
            for k in 0..s {
                lw[k] = mean[k] - row[k];
                lwl[k] = mean[k];
            }
            let denom = log_sum_exp(&lw);
            if denom == f64::NEG_INFINITY {
                return EstimateRecord::degenerate(i, Method::Bronze);
            }
            let value = log_sum_exp(&lwl) - denom;
            EstimateRecord::new(i, Method::Bronze, value, is_ess(&lw).expect("nonzero weights"))
        })
        .collect()
}

/// `psi` as the sum of per-observation estimates.
pub fn psi_plugin(records: &[EstimateRecord]) -> Result<PsiEstimate> {
    let first = records
        .first()
        .ok_or_else(|| Error::Input("no estimates to combine".into()))?;
    if records.iter().any(|r| r.method != first.method) {
        return input("estimates come from different methods");
    }
    let degenerate = records.iter().any(|r| r.log_mu_hat == f64::NEG_INFINITY);
    let value = if degenerate {
        f64::NEG_INFINITY
    } else {
        records.iter().map(|r| r.log_mu_hat).sum()
    };
    Ok(PsiEstimate {
        value,
        method: first.method,
        per_obs: records.to_vec(),
        degenerate,
        discarded_draws: 0,
    })
}

/// Uniform subset of `k` of `n` indices (without replacement), sorted.
pub fn subsample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return input(format!("subset size must be in 1..={n}, got {k}"));
    }
    let mut rng = rng_from_seed(seed);
    let mut idx = sample_indices(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn scaled_subset_sum(n: usize, values: impl Iterator<Item = f64>, k: usize) -> f64 {
    let sum: f64 = values.sum();
    n as f64 / k as f64 * sum
}

/// `(n/K) sum_{i in I} log mu_i` for a uniform random subset `I` of size `K`.
pub fn gold_estimate(exact_log_mu: &[f64], k: usize, seed: u64) -> Result<PsiEstimate> {
    let n = exact_log_mu.len();
    let idx = subsample_indices(n, k, seed)?;
    let value = scaled_subset_sum(n, idx.iter().map(|&i| exact_log_mu[i]), k);
    Ok(PsiEstimate {
        value,
        method: Method::Gold,
        per_obs: Vec::new(),
        degenerate: !value.is_finite(),
        discarded_draws: 0,
    })
}

/// Seed of the subset draw used by [`silver_estimate`].
pub fn silver_subset_seed(seed: u64) -> u64 {
    derive_seed(seed, 0)
}

/// Seed of the leave-one-out run for observation `i` in [`silver_estimate`].
pub fn silver_run_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64 + 1)
}

/// Gold estimator with each `log mu_i` replaced by a brute-force estimate from
/// `floor(total_draws / K)` leave-one-out draws. `loo_sampler(i, draws, seed)`
/// must return draws from `p(theta | y_{-i})`.
pub fn silver_estimate<F>(
    n: usize,
    k: usize,
    total_draws: usize,
    seed: u64,
    mut loo_sampler: F,
) -> Result<PsiEstimate>
where
    F: FnMut(usize, usize, u64) -> Result<WeightedSampleSet>,
{
    if total_draws < 2 * k {
        return input(format!(
            "silver needs at least {} draws for K = {k}, got {total_draws}",
            2 * k
        ));
    }
    let idx = subsample_indices(n, k, silver_subset_seed(seed))?;
    let per_run = total_draws / k;
    let mut estimates = Vec::with_capacity(k);
    for &i in &idx {
        let set = loo_sampler(i, per_run, silver_run_seed(seed, i))?;
        if set.n_obs() != n || set.n_draws() != per_run {
            return input("leave-one-out sampler returned a mismatched sample set");
        }
        estimates.push(log_sum_exp(set.loglik_row(i)) - ln_s(&set));
    }
    let value = scaled_subset_sum(n, estimates.into_iter(), k);
    Ok(PsiEstimate {
        value,
        method: Method::Silver,
        per_obs: Vec::new(),
        degenerate: !value.is_finite(),
        discarded_draws: total_draws - k * per_run,
    })
}

/// Empirical asymptotic variance from replicate log-estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalAv {
    /// `S` times the sample variance of the finite replicates.
    pub value: f64,
    /// Mean of the finite replicates minus the true value.
    pub bias: f64,
    pub used: usize,
    pub excluded: usize,
}

fn finite_split(xs: &[f64]) -> (Vec<f64>, usize) {
    let finite: Vec<f64> = xs.iter().copied().filter(|v| v.is_finite()).collect();
    let excluded = xs.len() - finite.len();
    (finite, excluded)
}

fn sample_mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (m, v)
}

/// `S * var(log mu_hat)` over replicates, the delta-method estimate of the
/// relative asymptotic variance. Non-finite replicates are excluded.
pub fn empirical_av(replicate_log_estimates: &[f64], s: usize, true_log_mu: f64) -> Result<EmpiricalAv> {
    if replicate_log_estimates.len() < 10 {
        return input("need at least 10 replicates");
    }
    let (finite, excluded) = finite_split(replicate_log_estimates);
    if finite.len() < 2 {
        return Err(Error::Numerical("fewer than 2 finite replicates".into()));
    }
    let (m, v) = sample_mean_var(&finite);
    Ok(EmpiricalAv {
        value: s as f64 * v,
        bias: m - true_log_mu,
        used: finite.len(),
        excluded,
    })
}

/// `S * var(mu_hat / mu)` over replicates, on the natural scale.
pub fn empirical_relative_variance(
    replicate_log_estimates: &[f64],
    s: usize,
    true_log_mu: f64,
) -> Result<EmpiricalAv> {
    let ratios: Vec<f64> = replicate_log_estimates
        .iter()
        .map(|l| (l - true_log_mu).exp())
        .collect();
    if ratios.len() < 10 {
        return input("need at least 10 replicates");
    }
    let (finite, excluded) = finite_split(&ratios);
    if finite.len() < 2 {
        return Err(Error::Numerical("fewer than 2 finite replicates".into()));
    }
    let (m, v) = sample_mean_var(&finite);
    Ok(EmpiricalAv {
        value: s as f64 * v,
        bias: m - 1.0,
        used: finite.len(),
        excluded,
    })
}
