//! Non-conjugate backends: logistic regression and Gaussian regression with
//! unknown noise variance, under independent Gaussian or Laplace priors.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{input, Result};
use crate::model::PointwiseModel;
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Independent per-coordinate prior on regression coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordinatePrior {
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
    /// Zero-location Laplace with per-coordinate scale `b` (variance `2 b^2`).
    Laplace { scale: Vec<f64> },
}

impl CoordinatePrior {
    pub fn gaussian(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return input("prior mean and variance lengths differ");
        }
        if var.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return input("prior variances must be positive");
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return input("prior means must be finite");
        }
        Ok(CoordinatePrior::Gaussian { mean, var })
    }

    pub fn gaussian_iid(p: usize, var: f64) -> Result<Self> {
        Self::gaussian(vec![0.0; p], vec![var; p])
    }

    pub fn laplace(scale: Vec<f64>) -> Result<Self> {
        if scale.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return input("Laplace scales must be positive");
        }
        Ok(CoordinatePrior::Laplace { scale })
    }

    pub fn laplace_iid(p: usize, scale: f64) -> Result<Self> {
        Self::laplace(vec![scale; p])
    }

    pub fn dim(&self) -> usize {
        match self {
            CoordinatePrior::Gaussian { mean, .. } => mean.len(),
            CoordinatePrior::Laplace { scale } => scale.len(),
        }
    }

    /// Per-coordinate prior variance.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            CoordinatePrior::Gaussian { var, .. } => var.clone(),
            CoordinatePrior::Laplace { scale } => scale.iter().map(|b| 2.0 * b * b).collect(),
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            CoordinatePrior::Gaussian { mean, var } => theta
                .iter()
                .zip(mean)
                .zip(var)
                .map(|((t, m), v)| -0.5 * (LN_2PI + v.ln()) - 0.5 * (t - m) * (t - m) / v)
                .sum(),
            CoordinatePrior::Laplace { scale } => theta
                .iter()
                .zip(scale)
                .map(|(t, b)| -(2.0 * b).ln() - t.abs() / b)
                .sum(),
        }
    }

    /// Overwrites `grad`; the Laplace kink uses `sign(0) = 0`.
    pub fn grad(&self, theta: &[f64], grad: &mut [f64]) {
        match self {
            CoordinatePrior::Gaussian { mean, var } => {
                for k in 0..theta.len() {
                    grad[k] = -(theta[k] - mean[k]) / var[k];
                }
            }
            CoordinatePrior::Laplace { scale } => {
                for k in 0..theta.len() {
                    grad[k] = -sign(theta[k]) / scale[k];
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            CoordinatePrior::Gaussian { mean, var } => mean
                .iter()
                .zip(var)
                .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            CoordinatePrior::Laplace { scale } => scale
                .iter()
                .map(|b| {
                    let u: f64 = rng.random::<f64>() - 0.5;
                    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                })
                .collect(),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(row: impl Iterator<Item = f64>, theta: &[f64]) -> f64 {
    row.zip(theta).map(|(a, b)| a * b).sum()
}

/// Bernoulli responses with success probability `sigmoid(x_i^T theta)`.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    data: Dataset,
    prior: CoordinatePrior,
}

impl LogisticModel {
    pub fn new(data: Dataset, prior: CoordinatePrior) -> Result<Self> {
        if !data.is_binary() {
            return input("logistic regression needs responses in {0, 1}");
        }
        if prior.dim() != data.p() {
            return input(format!(
                "prior has dimension {}, expected {}",
                prior.dim(),
                data.p()
            ));
        }
        Ok(Self { data, prior })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn prior(&self) -> &CoordinatePrior {
        &self.prior
    }

    fn eta(&self, i: usize, theta: &[f64]) -> f64 {
        dot(self.data.x().row(i).iter().copied(), theta)
    }

    fn term(y: f64, eta: f64) -> f64 {
        if y > 0.5 {
            -softplus(-eta)
        } else {
            -softplus(eta)
        }
    }
}

impl PointwiseModel for LogisticModel {
    fn dim(&self) -> usize {
        self.data.p()
    }

    fn n_obs(&self) -> usize {
        self.data.n()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(theta)
    }

    fn grad_log_prior(&self, theta: &[f64], grad: &mut [f64]) {
        self.prior.grad(theta, grad)
    }

    fn log_lik_term(&self, i: usize, theta: &[f64]) -> f64 {
        Self::term(self.data.y()[i], self.eta(i, theta))
    }

    fn grad_log_lik_term(&self, i: usize, theta: &[f64], grad: &mut [f64]) {
        let r = self.data.y()[i] - sigmoid(self.eta(i, theta));
        for (g, x) in grad.iter_mut().zip(self.data.x().row(i).iter()) {
            *g = r * x;
        }
    }

    fn log_lik_terms(&self, theta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = Self::term(self.data.y()[i], self.eta(i, theta));
        }
    }

    fn add_weighted_lik_grad(&self, theta: &[f64], coef: &[f64], grad: &mut [f64]) {
        for (i, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = self.data.x().row(i);
            let r = c * (self.data.y()[i] - sigmoid(dot(row.iter().copied(), theta)));
            for (g, x) in grad.iter_mut().zip(row.iter()) {
                *g += r * x;
            }
        }
    }

    fn sample_prior(&self, rng: &mut Rng) -> Option<Vec<f64>> {
        Some(self.prior.sample(rng))
    }
}

/// `y_i ~ N(x_i^T beta, sigma2)` with `sigma2 ~ InvGamma(shape, rate)`.
///
/// The parameter vector is `(beta, log sigma2)`; the log-Jacobian of the
/// transform is part of `log_prior`.
#[derive(Debug, Clone)]
pub struct GaussianUnknownNoiseModel {
    data: Dataset,
    prior_theta: CoordinatePrior,
    shape: f64,
    rate: f64,
}

impl GaussianUnknownNoiseModel {
    pub fn new(data: Dataset, prior_theta: CoordinatePrior, shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
            return input(format!(
                "inverse-gamma shape and rate must be positive, got ({shape}, {rate})"
            ));
        }
        if prior_theta.dim() != data.p() {
            return input(format!(
                "prior has dimension {}, expected {}",
                prior_theta.dim(),
                data.p()
            ));
        }
        Ok(Self {
            data,
            prior_theta,
            shape,
            rate,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn p(&self) -> usize {
        self.data.p()
    }

    fn resid(&self, i: usize, theta: &[f64]) -> f64 {
        self.data.y()[i] - dot(self.data.x().row(i).iter().copied(), &theta[..self.p()])
    }

    fn term(r: f64, log_s2: f64) -> f64 {
        -0.5 * (LN_2PI + log_s2) - 0.5 * r * r * (-log_s2).exp()
    }
}

impl PointwiseModel for GaussianUnknownNoiseModel {
    fn dim(&self) -> usize {
        self.p() + 1
    }

    fn n_obs(&self) -> usize {
        self.data.n()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let p = self.p();
        let lam = theta[p];
        self.prior_theta.log_density(&theta[..p]) + self.shape * self.rate.ln()
            - ln_gamma(self.shape)
            - self.shape * lam
            - self.rate * (-lam).exp()
    }

    fn grad_log_prior(&self, theta: &[f64], grad: &mut [f64]) {
        let p = self.p();
        self.prior_theta.grad(&theta[..p], &mut grad[..p]);
        grad[p] = -self.shape + self.rate * (-theta[p]).exp();
    }

    fn log_lik_term(&self, i: usize, theta: &[f64]) -> f64 {
        Self::term(self.resid(i, theta), theta[self.p()])
    }

    fn grad_log_lik_term(&self, i: usize, theta: &[f64], grad: &mut [f64]) {
        let p = self.p();
        let r = self.resid(i, theta);
        let prec = (-theta[p]).exp();
        for (g, x) in grad[..p].iter_mut().zip(self.data.x().row(i).iter()) {
            *g = r * prec * x;
        }
        grad[p] = -0.5 + 0.5 * r * r * prec;
    }

    fn log_lik_terms(&self, theta: &[f64], out: &mut [f64]) {
        let lam = theta[self.p()];
        for (i, o) in out.iter_mut().enumerate() {
            *o = Self::term(self.resid(i, theta), lam);
        }
    }

    fn add_weighted_lik_grad(&self, theta: &[f64], coef: &[f64], grad: &mut [f64]) {
        let p = self.p();
        let prec = (-theta[p]).exp();
        for (i, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let r = self.resid(i, theta);
            for (g, x) in grad[..p].iter_mut().zip(self.data.x().row(i).iter()) {
                *g += c * r * prec * x;
            }
            grad[p] += c * (-0.5 + 0.5 * r * r * prec);
        }
    }

    fn sample_prior(&self, rng: &mut Rng) -> Option<Vec<f64>> {
        let mut theta = self.prior_theta.sample(rng);
        let precision = Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated shape and rate")
            .sample(rng);
        theta.push(-precision.ln());
        Some(theta)
    }
}
