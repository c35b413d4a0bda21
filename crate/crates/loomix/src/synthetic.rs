//! Synthetic Gaussian regression datasets.

use loomix_core::conjugate::GaussianLinearModel;
use loomix_core::rng::rng_from_seed;
use loomix_core::{Dataset, Error};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::config::PriorSpec;

/// `X_ij ~ N(0, tau2)` i.i.d., `theta` from the prior, `y ~ N(X theta, sigma2 I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDesign {
    pub n: usize,
    pub p: usize,
    pub sigma2: f64,
    pub tau2: f64,
    pub prior: PriorSpec,
}

impl SyntheticDesign {
    /// Draws `X` row by row, then `theta`, then the noise, all from one stream.
    ///
    /// A flat prior has no draw to take, so `theta` is then standard normal.
    pub fn generate(&self, seed: u64) -> loomix_core::Result<(GaussianLinearModel, Dataset)> {
        let (n, p) = (self.n, self.p);
        if n == 0 || p == 0 {
            return Err(Error::Input("n and p must be at least 1".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::Input(format!(
                "noise variance must be positive, got {} (degenerate likelihood)",
                self.sigma2
            )));
        }
        if !(self.tau2.is_finite() && self.tau2 > 0.0) {
            return Err(Error::Input(format!("design variance must be positive, got {}", self.tau2)));
        }
        let prior = self
            .prior
            .covariance(p)
            .map_err(|e| Error::Input(e.to_string()))?;
        let mut rng = rng_from_seed(seed);
        let tau = self.tau2.sqrt();
        let mut entries = Vec::with_capacity(n * p);
        for _ in 0..n * p {
            let z: f64 = StandardNormal.sample(&mut rng);
            entries.push(tau * z);
        }
        let x = DMatrix::from_row_slice(n, p, &entries);
        let zero = DVector::zeros(p);
        let theta = match prior.sample(&zero, &mut rng) {
            Some(t) => t,
            None => DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng)),
        };
        let sd = self.sigma2.sqrt();
        let mean = &x * &theta;
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            mean[i] + sd * e
        });
        let data = Dataset::new(y, x)?;
        let model = GaussianLinearModel::new(data.clone(), self.sigma2, zero, prior)?;
        Ok((model, data))
    }
}

/// [`SyntheticDesign`] with unit design variance.
pub fn gen_synthetic(
    n: usize,
    p: usize,
    sigma2: f64,
    prior: PriorSpec,
    seed: u64,
) -> loomix_core::Result<(GaussianLinearModel, Dataset)> {
    SyntheticDesign {
        n,
        p,
        sigma2,
        tau2: 1.0,
        prior,
    }
    .generate(seed)
}
