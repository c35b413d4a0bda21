//! Pareto-smoothed importance sampling.
//!
//! The largest `M = ceil(min(0.2 S, 3 sqrt(S)))` weights are replaced by
//! quantiles of a generalized Pareto distribution fitted to their
//! exceedances over the `(M+1)`-th largest weight. The fitted shape `k` is
//! the reliability diagnostic; `k > 0.7` is the usual alarm level.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{input, Result};
use crate::estimators::{is_ess, posterior_estimate, EstimateRecord, Method};
use crate::lse::log_sum_exp;
use crate::model::WeightedSampleSet;
use crate::rng::Rng;

/// Shape values above this flag unreliable importance weights.
pub const KHAT_ALARM: f64 = 0.7;

/// Generalized Pareto fit `F(x) = 1 - (1 + k x / sigma)^(-1/k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpdFit {
    pub k: f64,
    pub sigma: f64,
    pub n_tail: usize,
}

impl GpdFit {
    /// Quantile function.
    pub fn quantile(&self, p: f64) -> f64 {
        if self.k.abs() < 1e-12 {
            -self.sigma * (-p).ln_1p()
        } else {
            self.sigma * (-self.k * (-p).ln_1p()).exp_m1() / self.k
        }
    }
}

/// Draw from a generalized Pareto distribution with location zero.
pub fn gpd_sample(k: f64, sigma: f64, rng: &mut Rng) -> f64 {
    let u: f64 = rng.random();
    if k == 0.0 {
        -sigma * (-u).ln_1p()
    } else {
        sigma * (-k * (-u).ln_1p()).exp_m1() / k
    }
}

/// Zhang–Stephens posterior-mean estimate of the shape and scale from
/// ascending positive exceedances, with the shape shrunk slightly toward 0.5.
/// Returns `None` for fewer than 5 points or a degenerate fit.
pub fn gpd_fit(tail: &[f64]) -> Result<Option<GpdFit>> {
    if tail.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return input("exceedances must be positive and finite");
    }
    if tail.windows(2).any(|w| w[0] > w[1]) {
        return input("exceedances must be sorted ascending");
    }
    let n = tail.len();
    if n < 5 {
        return Ok(None);
    }
    const PRIOR_BS: f64 = 3.0;
    const PRIOR_K: f64 = 10.0;
    let m = 30 + (n as f64).sqrt() as usize;
    let quartile = tail[((n as f64) / 4.0 + 0.5) as usize - 1];
    let xmax = tail[n - 1];
    let mut b: Vec<f64> = (1..=m)
        .map(|j| {
            (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / (PRIOR_BS * quartile) + 1.0 / xmax
        })
        .collect();
    let mean_log1p = |bj: f64| tail.iter().map(|x| (-bj * x).ln_1p()).sum::<f64>() / n as f64;
    let len_scale: Vec<f64> = b
        .iter()
        .map(|&bj| {
            let kj = mean_log1p(bj);
            n as f64 * ((-bj / kj).ln() - kj - 1.0)
        })
        .collect();
    let mut w: Vec<f64> = len_scale
        .iter()
        .map(|li| 1.0 / len_scale.iter().map(|lj| (lj - li).exp()).sum::<f64>())
        .collect();
    let keep: Vec<bool> = w.iter().map(|x| *x >= 10.0 * f64::EPSILON).collect();
    let mut k_idx = 0;
    b.retain(|_| {
        k_idx += 1;
        keep[k_idx - 1]
    });
    w.retain(|x| *x >= 10.0 * f64::EPSILON);
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Ok(None);
    }
    let b_post: f64 = b.iter().zip(&w).map(|(bj, wj)| bj * wj / total).sum();
    let k_raw = mean_log1p(b_post);
    let sigma = -k_raw / b_post;
    let k = (n as f64 * k_raw + PRIOR_K * 0.5) / (n as f64 + PRIOR_K);
    if !(k.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return Ok(None);
    }
    Ok(Some(GpdFit { k, sigma, n_tail: n }))
}

/// Tail size for `s` weights.
pub fn tail_size(s: usize) -> usize {
    let s = s as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Smoothed log-weights and the fitted shape (`None` when no tail could be
/// fitted, in which case the weights are returned unchanged).
pub fn psis_smooth(log_weights: &[f64]) -> Result<(Vec<f64>, Option<f64>)> {
    let s = log_weights.len();
    if s < 25 {
        return input(format!("smoothing needs at least 25 weights, got {s}"));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return input("log-weights must be finite or -inf");
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return input("importance weights are all zero");
    }
    let x: Vec<f64> = log_weights.iter().map(|w| w - max).collect();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let m = tail_size(s);
    let cutoff = x[order[s - m - 1]].max(f64::MIN_POSITIVE.ln());
    let tail: Vec<usize> = order.iter().copied().filter(|&j| x[j] > cutoff).collect();
    if tail.len() <= 4 {
        return Ok((log_weights.to_vec(), None));
    }
    let exp_cutoff = cutoff.exp();
    let exceed: Vec<f64> = tail.iter().map(|&j| x[j].exp() - exp_cutoff).collect();
    if exceed.iter().any(|e| !(*e > 0.0)) {
        return Ok((log_weights.to_vec(), None));
    }
    let fit = match gpd_fit(&exceed)? {
        Some(f) => f,
        None => return Ok((log_weights.to_vec(), None)),
    };
    let mut out = x;
    let len = tail.len() as f64;
    for (r, &j) in tail.iter().enumerate() {
        let q = fit.quantile((r as f64 + 0.5) / len);
        let v = (q + exp_cutoff).ln();
        out[j] = if v.is_nan() { 0.0 } else { v.min(0.0) };
    }
    for v in out.iter_mut() {
        *v += max;
    }
    Ok((out, Some(fit.k)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsisEstimate {
    pub records: Vec<EstimateRecord>,
    /// Share of observations whose fitted shape exceeds [`KHAT_ALARM`].
    pub khat_fraction: f64,
}

/// Posterior importance sampling with Pareto-smoothed weights.
pub fn psis_estimate(samples: &WeightedSampleSet) -> Result<PsisEstimate> {
    let raw = posterior_estimate(samples);
    let mut records = Vec::with_capacity(raw.len());
    let mut lw = vec![0.0; samples.n_draws()];
    let mut lwl = vec![0.0; samples.n_draws()];
    for (i, base) in raw.into_iter().enumerate() {
        let mut rec = EstimateRecord {
            method: Method::Psis,
            ..base
        };
        if rec.degenerate {
            records.push(rec);
            continue;
        }
        let row = samples.loglik_row(i);
        for (w, l) in lw.iter_mut().zip(row) {
            *w = -l;
        }
        let (smoothed, khat) = psis_smooth(&lw)?;
        rec.khat = khat;
        if khat.is_some() {
            for k in 0..lwl.len() {
                lwl[k] = smoothed[k] + row[k];
            }
            rec.log_mu_hat = log_sum_exp(&lwl) - log_sum_exp(&smoothed);
            rec.is_ess = is_ess(&smoothed)?;
        }
        records.push(rec);
    }
    let alarms = records
        .iter()
        .filter(|r| r.khat.is_some_and(|k| k > KHAT_ALARM))
        .count();
    let khat_fraction = alarms as f64 / records.len() as f64;
    Ok(PsisEstimate {
        records,
        khat_fraction,
    })
}
