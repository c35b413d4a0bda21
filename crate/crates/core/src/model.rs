//! Model abstraction shared by every sampler and estimator.

use crate::error::{input, Error, Result};
use crate::lse::log_sum_exp;
use crate::rng::Rng;

/// A Bayesian model with conditionally independent observations,
/// `p(theta, y) = p(theta) * prod_i p(y_i | theta)`.
///
/// Gradient methods write into `grad`, which has length `dim()`. The
/// likelihood terms must never be `+inf` for finite `theta`.
pub trait PointwiseModel: Send + Sync {
    fn dim(&self) -> usize;

    fn n_obs(&self) -> usize;

    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Overwrites `grad` with the gradient of `log_prior`.
    fn grad_log_prior(&self, theta: &[f64], grad: &mut [f64]);

    /// `log p(y_i | theta)`.
    fn log_lik_term(&self, i: usize, theta: &[f64]) -> f64;

    /// Overwrites `grad` with the gradient of `log_lik_term(i, theta)`.
    fn grad_log_lik_term(&self, i: usize, theta: &[f64], grad: &mut [f64]);

    /// All `n_obs()` likelihood terms at once.
    fn log_lik_terms(&self, theta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.log_lik_term(i, theta);
        }
    }

    /// Adds `sum_i coef[i] * grad log p(y_i | theta)` to `grad`.
    ///
    /// Regression backends override this to share the linear predictor.
    fn add_weighted_lik_grad(&self, theta: &[f64], coef: &[f64], grad: &mut [f64]) {
        let mut tmp = vec![0.0; self.dim()];
        for (i, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            self.grad_log_lik_term(i, theta, &mut tmp);
            for (g, t) in grad.iter_mut().zip(&tmp) {
                *g += c * t;
            }
        }
    }

    /// A draw from the prior, or `None` when the prior is improper.
    fn sample_prior(&self, _rng: &mut Rng) -> Option<Vec<f64>> {
        None
    }
}

/// Which unnormalized density a sampler targets.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// `p(theta | y)`.
    Posterior,
    /// The weighted mixture of leave-one-out posteriors,
    /// `q(theta) ∝ sum_i alpha_i p(theta) p(y_{-i} | theta)`. Stores `log alpha`.
    Mixture { log_alpha: Vec<f64> },
    /// Tempered posterior `p(theta) * (prod_i p(y_i|theta))^((n-1)/n)`.
    Bronze,
    /// `p(theta | y_{-i})`.
    LeaveOneOut(usize),
}

impl TargetKind {
    /// Mixture with the default all-ones weights.
    pub fn mixture_uniform(n: usize) -> Self {
        TargetKind::Mixture {
            log_alpha: vec![0.0; n],
        }
    }

    pub fn mixture(alpha: &[f64]) -> Result<Self> {
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return input("mixture weights must be strictly positive and finite");
        }
        Ok(TargetKind::Mixture {
            log_alpha: alpha.iter().map(|a| a.ln()).collect(),
        })
    }

    pub fn tag(&self) -> SampleSource {
        match self {
            TargetKind::Posterior => SampleSource::Posterior,
            TargetKind::Mixture { .. } => SampleSource::Mixture,
            TargetKind::Bronze => SampleSource::Bronze,
            TargetKind::LeaveOneOut(i) => SampleSource::LeaveOneOut(*i),
        }
    }
}

/// A sampleable unnormalized log-density built from a [`PointwiseModel`].
#[derive(Clone)]
pub struct TargetDensity<'a> {
    model: &'a dyn PointwiseModel,
    kind: TargetKind,
}

impl<'a> TargetDensity<'a> {
    pub fn new(model: &'a dyn PointwiseModel, kind: TargetKind) -> Result<Self> {
        let n = model.n_obs();
        match &kind {
            TargetKind::Mixture { log_alpha } => {
                if log_alpha.len() != n {
                    return input(format!(
                        "mixture needs {n} weights, got {}",
                        log_alpha.len()
                    ));
                }
                if log_alpha.iter().any(|a| !a.is_finite()) {
                    return input("mixture weights must be strictly positive and finite");
                }
            }
            TargetKind::LeaveOneOut(i) if *i >= n => {
                return input(format!("observation index {i} out of range (n = {n})"));
            }
            _ => {}
        }
        Ok(Self { model, kind })
    }

    pub fn posterior(model: &'a dyn PointwiseModel) -> Self {
        Self {
            model,
            kind: TargetKind::Posterior,
        }
    }

    pub fn mixture(model: &'a dyn PointwiseModel) -> Self {
        Self {
            model,
            kind: TargetKind::mixture_uniform(model.n_obs()),
        }
    }

    pub fn bronze(model: &'a dyn PointwiseModel) -> Self {
        Self {
            model,
            kind: TargetKind::Bronze,
        }
    }

    pub fn model(&self) -> &'a dyn PointwiseModel {
        self.model
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.model.dim() {
            return input(format!(
                "parameter has length {}, model dimension is {}",
                theta.len(),
                self.model.dim()
            ));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return input("non-finite parameter vector");
        }
        Ok(())
    }

    /// Unnormalized log-density at `theta`.
    pub fn eval_log_target(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let mut ll = vec![0.0; self.model.n_obs()];
        self.model.log_lik_terms(theta, &mut ll);
        Ok(self.combine(theta, &ll, None))
    }

    /// Gradient of [`eval_log_target`](Self::eval_log_target).
    pub fn grad_log_target(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut grad = vec![0.0; self.model.dim()];
        let mut scratch = TargetScratch::new(self.model.n_obs());
        self.log_density_grad(theta, &mut grad, &mut scratch);
        Ok(grad)
    }

    /// Unchecked value-and-gradient used inside samplers. Returns the log
    /// density (possibly `-inf` or NaN for pathological `theta`).
    pub fn log_density_grad(
        &self,
        theta: &[f64],
        grad: &mut [f64],
        scratch: &mut TargetScratch,
    ) -> f64 {
        let n = self.model.n_obs();
        scratch.ll.resize(n, 0.0);
        scratch.coef.resize(n, 0.0);
        self.model.log_lik_terms(theta, &mut scratch.ll);
        let value = self.combine(theta, &scratch.ll, Some(&mut scratch.coef));
        self.model.grad_log_prior(theta, grad);
        if value.is_finite() {
            self.model.add_weighted_lik_grad(theta, &scratch.coef, grad);
        }
        value
    }

    /// Log-density from precomputed likelihood terms. When `coef` is given it
    /// receives the per-term coefficients of the likelihood gradients.
    fn combine(&self, theta: &[f64], ll: &[f64], coef: Option<&mut Vec<f64>>) -> f64 {
        let n = ll.len();
        let log_prior = self.model.log_prior(theta);
        let unit = |c: &mut Vec<f64>, skip: Option<usize>, w: f64| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = if Some(j) == skip { 0.0 } else { w };
            }
        };
        match &self.kind {
            TargetKind::Posterior => {
                if let Some(c) = coef {
                    unit(c, None, 1.0);
                }
                log_prior + ll.iter().sum::<f64>()
            }
            TargetKind::Bronze => {
                let w = (n as f64 - 1.0) / n as f64;
                if let Some(c) = coef {
                    unit(c, None, w);
                }
                if w == 0.0 {
                    log_prior
                } else {
                    log_prior + w * ll.iter().sum::<f64>()
                }
            }
            TargetKind::LeaveOneOut(i) => {
                if let Some(c) = coef {
                    unit(c, Some(*i), 1.0);
                }
                log_prior
                    + ll.iter()
                        .enumerate()
                        .filter(|(j, _)| j != i)
                        .map(|(_, v)| v)
                        .sum::<f64>()
            }
            TargetKind::Mixture { log_alpha } => {
                let mut vanished = ll.iter().enumerate().filter(|(_, v)| **v == f64::NEG_INFINITY);
                match (vanished.next(), vanished.next()) {
                    (None, _) => {
                        // log p + sum l + LSE(log a - l); the LSE weights are
                        // the component responsibilities.
                        let mut scores: Vec<f64> =
                            ll.iter().zip(log_alpha).map(|(l, a)| a - l).collect();
                        let lse = log_sum_exp(&scores);
                        if let Some(c) = coef {
                            for (cj, s) in c.iter_mut().zip(scores.iter_mut()) {
                                *cj = 1.0 - (*s - lse).exp();
                            }
                        }
                        log_prior + ll.iter().sum::<f64>() + lse
                    }
                    (Some((i, _)), None) => {
                        // Only the component that omits observation i survives.
                        if let Some(c) = coef {
                            unit(c, Some(i), 1.0);
                        }
                        log_prior
                            + log_alpha[i]
                            + ll.iter()
                                .enumerate()
                                .filter(|(j, _)| *j != i)
                                .map(|(_, v)| v)
                                .sum::<f64>()
                    }
                    (Some(_), Some(_)) => {
                        if let Some(c) = coef {
                            unit(c, None, 0.0);
                        }
                        f64::NEG_INFINITY
                    }
                }
            }
        }
    }
}

/// Reusable buffers for [`TargetDensity::log_density_grad`].
#[derive(Debug, Default, Clone)]
pub struct TargetScratch {
    ll: Vec<f64>,
    coef: Vec<f64>,
}

impl TargetScratch {
    pub fn new(n: usize) -> Self {
        Self {
            ll: vec![0.0; n],
            coef: vec![0.0; n],
        }
    }
}

/// Where a sample set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SampleSource {
    Posterior,
    Mixture,
    Bronze,
    LeaveOneOut(usize),
    Prior,
    External,
}

/// `S` draws with the `n x S` log-likelihood matrix cached.
#[derive(Debug, Clone)]
pub struct WeightedSampleSet {
    thetas: Vec<Vec<f64>>,
    /// Row-major `n x S`: entry `(i, s)` at `i * S + s`.
    loglik: Vec<f64>,
    n: usize,
    s: usize,
    source: SampleSource,
    seed: u64,
}

impl WeightedSampleSet {
    /// Evaluates every likelihood term at every draw.
    pub fn from_draws(
        model: &dyn PointwiseModel,
        thetas: Vec<Vec<f64>>,
        source: SampleSource,
        seed: u64,
    ) -> Result<Self> {
        let s = thetas.len();
        if s < 2 {
            return input("a sample set needs at least 2 draws");
        }
        let n = model.n_obs();
        let mut loglik = vec![0.0; n * s];
        let mut col = vec![0.0; n];
        for (k, theta) in thetas.iter().enumerate() {
            if theta.len() != model.dim() {
                return input("draw has the wrong dimension");
            }
            model.log_lik_terms(theta, &mut col);
            for (i, v) in col.iter().enumerate() {
                loglik[i * s + k] = *v;
            }
        }
        Ok(Self {
            thetas,
            loglik,
            n,
            s,
            source,
            seed,
        })
    }

    /// A sample set known only through its likelihood matrix (rows are
    /// observations). Draws are not retained.
    pub fn from_loglik_rows(rows: Vec<Vec<f64>>, source: SampleSource, seed: u64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return input("need at least one observation row");
        }
        let s = rows[0].len();
        if s < 2 {
            return input("a sample set needs at least 2 draws");
        }
        if rows.iter().any(|r| r.len() != s) {
            return input("ragged log-likelihood rows");
        }
        if rows.iter().flatten().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numerical("log-likelihood entries must be < +inf".into()));
        }
        Ok(Self {
            thetas: Vec::new(),
            loglik: rows.concat(),
            n,
            s,
            source,
            seed,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn n_draws(&self) -> usize {
        self.s
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn source(&self) -> SampleSource {
        self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Log-likelihood of observation `i` across all draws.
    pub fn loglik_row(&self, i: usize) -> &[f64] {
        &self.loglik[i * self.s..(i + 1) * self.s]
    }

    pub fn loglik(&self, i: usize, s: usize) -> f64 {
        self.loglik[i * self.s + s]
    }

    /// Recomputes every column from `model` and compares bit-for-bit.
    pub fn is_coherent_with(&self, model: &dyn PointwiseModel) -> bool {
        let mut col = vec![0.0; self.n];
        self.thetas.len() == self.s
            && self.thetas.iter().enumerate().all(|(k, theta)| {
                model.log_lik_terms(theta, &mut col);
                col.iter()
                    .enumerate()
                    .all(|(i, v)| v.to_bits() == self.loglik(i, k).to_bits())
            })
    }

    /// Keeps the first `s` draws.
    pub fn truncated(&self, s: usize) -> Result<Self> {
        if s < 2 || s > self.s {
            return input(format!("cannot truncate {} draws to {s}", self.s));
        }
        let mut loglik = Vec::with_capacity(self.n * s);
        for i in 0..self.n {
            loglik.extend_from_slice(&self.loglik_row(i)[..s]);
        }
        Ok(Self {
            thetas: self.thetas.iter().take(s).cloned().collect(),
            loglik,
            n: self.n,
            s,
            source: self.source,
            seed: self.seed,
        })
    }
}
