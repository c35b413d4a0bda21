#![allow(dead_code)]

use loomix_core::conjugate::{GaussianLinearModel, PriorCovariance};
use loomix_core::rng::rng_from_seed;
use loomix_core::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// `X` standard normal, `y = X theta + noise` with `theta` and noise standard normal.
pub fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let x = gaussian_matrix(n, p, seed);
    let mut rng = rng_from_seed(seed ^ 0xABCD);
    let theta = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Dataset::new(&x * theta + noise, x).unwrap()
}

pub fn iso_model(n: usize, p: usize, nu2: f64, seed: u64) -> GaussianLinearModel {
    GaussianLinearModel::centered(
        random_dataset(n, p, seed),
        1.0,
        PriorCovariance::isotropic(nu2).unwrap(),
    )
    .unwrap()
}

/// Composite Simpson rule with `m` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Posterior mean and covariance by explicit inversion.
pub fn refit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    theta0: &DVector<f64>,
    prior_prec: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let prec = x.transpose() * x / sigma2 + prior_prec;
    let cov = prec.try_inverse().expect("invertible precision");
    let mean = &cov * (x.transpose() * y / sigma2 + prior_prec * theta0);
    (mean, cov)
}

pub fn drop_row(x: &DMatrix<f64>, y: &DVector<f64>, i: usize) -> (DMatrix<f64>, DVector<f64>) {
    (x.clone().remove_row(i), y.clone().remove_row(i))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn max_rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Central finite differences with step `1e-6 (1 + |theta_k|)`.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let h = 1e-6 * (1.0 + theta[k].abs());
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise error relative to the gradient's overall scale.
pub fn grad_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(1e-8f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}
