//! Closed-form machinery for the Gaussian linear model
//! `y_i | theta ~ N(x_i^T theta, sigma2)`, `theta ~ N(theta0, Sigma)`.
//!
//! Everything that can be computed exactly is: full and leave-one-out
//! posteriors, evidences, the Bayesian hat matrix, leave-one-out predictive
//! densities, mixture probabilities and i.i.d. samplers for each target.
//! Leave-one-out posteriors come from a rank-one downdate of the full-data
//! precision factor rather than from a refit.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{input, Error, Result};
use crate::linalg::{
    chol_inverse, chol_logdet, chol_rank_one, cholesky_lower, solve_lower, solve_lower_transpose,
    symmetrize,
};
use crate::lse::log_sum_exp;
use crate::model::{PointwiseModel, SampleSource, WeightedSampleSet};
use crate::rng::{rng_from_seed, Rng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Leverage at or above which a leave-one-out posterior is treated as singular.
pub const SINGULAR_LEVERAGE: f64 = 1.0 - 1e-12;

/// Prior covariance of the regression coefficients.
#[derive(Debug, Clone)]
pub enum PriorCovariance {
    /// `Sigma^{-1} = 0` (improper flat prior; needs full column rank `X`).
    Flat,
    /// `Sigma = nu2 * I`.
    Isotropic(f64),
    Dense(DensePrior),
}

#[derive(Debug, Clone)]
pub struct DensePrior {
    cov: DMatrix<f64>,
    cov_chol: DMatrix<f64>,
    prec: DMatrix<f64>,
    logdet: f64,
}

impl PriorCovariance {
    pub fn isotropic(nu2: f64) -> Result<Self> {
        if !(nu2.is_finite() && nu2 > 0.0) {
            return input(format!("prior variance must be positive, got {nu2}"));
        }
        Ok(PriorCovariance::Isotropic(nu2))
    }

    pub fn dense(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return input("prior covariance must be square");
        }
        if (&cov - cov.transpose()).amax() > 1e-10 * (1.0 + cov.amax()) {
            return input("prior covariance must be symmetric");
        }
        let cov_chol = cholesky_lower(cov.clone(), "prior covariance")?;
        let prec = chol_inverse(&cov_chol);
        let logdet = chol_logdet(&cov_chol);
        Ok(PriorCovariance::Dense(DensePrior {
            cov,
            cov_chol,
            prec,
            logdet,
        }))
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, PriorCovariance::Flat)
    }

    /// `factor * Sigma`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self {
            PriorCovariance::Flat => Ok(PriorCovariance::Flat),
            PriorCovariance::Isotropic(v) => PriorCovariance::isotropic(v * factor),
            PriorCovariance::Dense(d) => PriorCovariance::dense(&d.cov * factor),
        }
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        match self {
            PriorCovariance::Dense(d) if d.cov.nrows() != p => input(format!(
                "prior covariance is {}x{}, expected {p}x{p}",
                d.cov.nrows(),
                d.cov.nrows()
            )),
            _ => Ok(()),
        }
    }

    fn add_precision(&self, a: &mut DMatrix<f64>) {
        match self {
            PriorCovariance::Flat => {}
            PriorCovariance::Isotropic(v) => {
                for k in 0..a.nrows() {
                    a[(k, k)] += 1.0 / v;
                }
            }
            PriorCovariance::Dense(d) => *a += &d.prec,
        }
    }

    fn precision_times(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            PriorCovariance::Flat => DVector::zeros(v.len()),
            PriorCovariance::Isotropic(nu2) => v / *nu2,
            PriorCovariance::Dense(d) => &d.prec * v,
        }
    }

    /// `log |Sigma|`, `None` for the flat prior.
    fn log_det(&self, p: usize) -> Option<f64> {
        match self {
            PriorCovariance::Flat => None,
            PriorCovariance::Isotropic(v) => Some(p as f64 * v.ln()),
            PriorCovariance::Dense(d) => Some(d.logdet),
        }
    }

    /// `X Sigma X^T`; `None` for the flat prior.
    fn x_sigma_xt(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        match self {
            PriorCovariance::Flat => None,
            PriorCovariance::Isotropic(v) => Some(x * x.transpose() * *v),
            PriorCovariance::Dense(d) => Some(x * &d.cov * x.transpose()),
        }
    }

    /// Draw from `N(mean, Sigma)`; `None` for the flat prior.
    pub fn sample(&self, mean: &DVector<f64>, rng: &mut Rng) -> Option<DVector<f64>> {
        let p = mean.len();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        match self {
            PriorCovariance::Flat => None,
            PriorCovariance::Isotropic(v) => Some(mean + z * v.sqrt()),
            PriorCovariance::Dense(d) => Some(mean + &d.cov_chol * z),
        }
    }
}

/// A multivariate Gaussian stored through the lower Cholesky factor of its
/// precision matrix.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    precision_chol: DMatrix<f64>,
    log_norm_const: f64,
}

impl GaussianDist {
    pub fn from_precision_chol(mean: DVector<f64>, precision_chol: DMatrix<f64>) -> Result<Self> {
        if precision_chol.diagonal().iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Numerical(
                "precision factor has a non-positive diagonal".into(),
            ));
        }
        let p = mean.len() as f64;
        let log_norm_const = -0.5 * p * LN_2PI + 0.5 * chol_logdet(&precision_chol);
        Ok(Self {
            mean,
            precision_chol,
            log_norm_const,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision_chol(&self) -> &DMatrix<f64> {
        &self.precision_chol
    }

    pub fn precision(&self) -> DMatrix<f64> {
        &self.precision_chol * self.precision_chol.transpose()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        chol_inverse(&self.precision_chol)
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_norm_const
    }

    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mean;
        let u = self.precision_chol.tr_mul(&d);
        self.log_norm_const - 0.5 * u.norm_squared()
    }

    /// `v^T Cov v` without forming the covariance.
    pub fn quad_form_cov(&self, v: &DVector<f64>) -> f64 {
        solve_lower(&self.precision_chol, v).norm_squared()
    }

    pub fn sample(&self, rng: &mut Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + solve_lower_transpose(&self.precision_chol, &z)
    }
}

/// Mixture of the leave-one-out posteriors with probabilities
/// `pi_i ∝ alpha_i p(y_{-i})`.
#[derive(Debug, Clone)]
pub struct MixtureExact {
    components: Vec<GaussianDist>,
    pis: Vec<f64>,
    log_pis: Vec<f64>,
}

impl MixtureExact {
    pub fn components(&self) -> &[GaussianDist] {
        &self.components
    }

    pub fn pis(&self) -> &[f64] {
        &self.pis
    }

    pub fn log_pis(&self) -> &[f64] {
        &self.log_pis
    }

    /// Categorical draw of a component index.
    fn draw_component(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.pis.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.pis.len() - 1
    }
}

/// Asymptotic relative variance of the classical posterior estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AsymptoticVariance {
    Finite(f64),
    Infinite,
}

impl AsymptoticVariance {
    pub fn is_infinite(&self) -> bool {
        matches!(self, AsymptoticVariance::Infinite)
    }

    pub fn value(&self) -> f64 {
        match self {
            AsymptoticVariance::Finite(v) => *v,
            AsymptoticVariance::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
struct Fit {
    prec_chol: DMatrix<f64>,
    mean: DVector<f64>,
    /// `P m = X^T y / sigma2 + Sigma^{-1} theta0`.
    shift: DVector<f64>,
    log_evidence: f64,
    /// `V X^T`, p x n.
    v_xt: DMatrix<f64>,
    leverage: Vec<f64>,
    fitted: Vec<f64>,
}

/// The conjugate Gaussian linear regression model.
#[derive(Debug, Clone)]
pub struct GaussianLinearModel {
    data: Dataset,
    sigma2: f64,
    theta0: DVector<f64>,
    prior: PriorCovariance,
    fit: OnceLock<std::result::Result<Fit, String>>,
}

impl GaussianLinearModel {
    pub fn new(
        data: Dataset,
        sigma2: f64,
        theta0: DVector<f64>,
        prior: PriorCovariance,
    ) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return input(format!("noise variance must be positive, got {sigma2}"));
        }
        if theta0.len() != data.p() {
            return input(format!(
                "prior mean has length {}, expected {}",
                theta0.len(),
                data.p()
            ));
        }
        prior.check_dim(data.p())?;
        let model = Self {
            data,
            sigma2,
            theta0,
            prior,
            fit: OnceLock::new(),
        };
        if model.prior.is_flat() {
            if model.data.p() > model.data.n() {
                return input("a flat prior needs p <= n");
            }
            model.fit()?;
        }
        Ok(model)
    }

    /// Model with a zero prior mean.
    pub fn centered(data: Dataset, sigma2: f64, prior: PriorCovariance) -> Result<Self> {
        let p = data.p();
        Self::new(data, sigma2, DVector::zeros(p), prior)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    pub fn prior(&self) -> &PriorCovariance {
        &self.prior
    }

    fn n(&self) -> usize {
        self.data.n()
    }

    fn p(&self) -> usize {
        self.data.p()
    }

    fn fit(&self) -> Result<&Fit> {
        self.fit
            .get_or_init(|| self.compute_fit().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Numerical(e.clone()))
    }

    fn compute_fit(&self) -> Result<Fit> {
        let x = self.data.x();
        let y = self.data.y();
        let s2 = self.sigma2;
        let mut prec = x.tr_mul(x) / s2;
        self.prior.add_precision(&mut prec);
        symmetrize(&mut prec);
        let prec_chol = cholesky_lower(prec, "posterior precision")?;
        let cov = chol_inverse(&prec_chol);
        let shift = x.tr_mul(y) / s2 + self.prior.precision_times(&self.theta0);
        let mean = &cov * &shift;
        let v_xt = &cov * x.transpose();
        let leverage = (0..self.n())
            .map(|i| x.row(i).dot(&v_xt.column(i).transpose()) / s2)
            .collect();
        let fitted = (x * &mean).iter().copied().collect();
        let log_evidence = self.evidence_from(
            self.n(),
            y.norm_squared(),
            chol_logdet(&prec_chol),
            mean.dot(&shift),
        );
        Ok(Fit {
            prec_chol,
            mean,
            shift,
            log_evidence,
            v_xt,
            leverage,
            fitted,
        })
    }

    /// `log p(y)` from posterior summaries. Under the flat prior the prior
    /// density is taken to be identically one.
    fn evidence_from(&self, n_obs: usize, yty: f64, logdet_prec: f64, m_dot_shift: f64) -> f64 {
        let p = self.p() as f64;
        let prior_const = match self.prior.log_det(self.p()) {
            Some(ld) => -0.5 * p * LN_2PI - 0.5 * ld,
            None => 0.0,
        };
        let prior_quad = self
            .theta0
            .dot(&self.prior.precision_times(&self.theta0));
        prior_const - 0.5 * n_obs as f64 * (LN_2PI + self.sigma2.ln()) + 0.5 * p * LN_2PI
            - 0.5 * logdet_prec
            + 0.5 * m_dot_shift
            - 0.5 * (yty / self.sigma2 + prior_quad)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return input(format!("observation index {i} out of range (n = {})", self.n()));
        }
        Ok(())
    }

    /// `p(theta | y)`.
    pub fn full_posterior(&self) -> Result<GaussianDist> {
        let fit = self.fit()?;
        GaussianDist::from_precision_chol(fit.mean.clone(), fit.prec_chol.clone())
    }

    /// `log p(y)`.
    pub fn log_evidence(&self) -> Result<f64> {
        Ok(self.fit()?.log_evidence)
    }

    /// `log p(y)` through the `n x n` marginal covariance
    /// `sigma2 I + X Sigma X^T` (proper priors only).
    pub fn log_evidence_marginal(&self) -> Result<f64> {
        let mut c = self
            .prior
            .x_sigma_xt(self.data.x())
            .ok_or_else(|| Error::Input("flat prior has no proper marginal".into()))?;
        for k in 0..self.n() {
            c[(k, k)] += self.sigma2;
        }
        let l = cholesky_lower(c, "marginal covariance")?;
        let r = self.data.y() - self.data.x() * &self.theta0;
        let u = solve_lower(&l, &r);
        Ok(-0.5 * self.n() as f64 * LN_2PI - 0.5 * chol_logdet(&l) - 0.5 * u.norm_squared())
    }

    pub fn leverage(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.leverages()?[i])
    }

    /// Diagonal of the hat matrix.
    pub fn leverages(&self) -> Result<Vec<f64>> {
        if self.use_dual_form() {
            let h = self.hat_matrix_dual()?;
            Ok(h.diagonal().iter().copied().collect())
        } else {
            Ok(self.fit()?.leverage.clone())
        }
    }

    /// Bayesian hat matrix `H = X (X^T X + sigma2 Sigma^{-1})^{-1} X^T`.
    pub fn hat_matrix(&self) -> Result<DMatrix<f64>> {
        if self.use_dual_form() {
            return self.hat_matrix_dual();
        }
        let fit = self.fit()?;
        let mut h = self.data.x() * &fit.v_xt / self.sigma2;
        symmetrize(&mut h);
        Ok(h)
    }

    /// Work in observation space when `p >= n` and the prior is proper.
    fn use_dual_form(&self) -> bool {
        !self.prior.is_flat() && self.p() >= self.n()
    }

    /// `H = I - sigma2 (X Sigma X^T + sigma2 I)^{-1}`.
    fn hat_matrix_dual(&self) -> Result<DMatrix<f64>> {
        let n = self.n();
        let mut k = self
            .prior
            .x_sigma_xt(self.data.x())
            .expect("dual form needs a proper prior");
        for j in 0..n {
            k[(j, j)] += self.sigma2;
        }
        let l = cholesky_lower(k, "marginal covariance")?;
        let mut h = -chol_inverse(&l) * self.sigma2;
        for j in 0..n {
            h[(j, j)] += 1.0;
        }
        Ok(h)
    }

    fn check_loo(&self, i: usize, h: f64) -> Result<()> {
        if h >= SINGULAR_LEVERAGE {
            return Err(Error::SingularLoo { index: i, leverage: h });
        }
        Ok(())
    }

    /// `(factor of P_{-i}, m_{-i}, shift_{-i})` via a rank-one downdate.
    fn loo_parts(&self, i: usize) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
        self.check_index(i)?;
        let fit = self.fit()?;
        self.check_loo(i, fit.leverage[i])?;
        let xi = self.data.row(i);
        let mut l = fit.prec_chol.clone();
        let mut v = &xi / self.sigma2.sqrt();
        chol_rank_one(&mut l, &mut v, -1.0).map_err(|_| Error::SingularLoo {
            index: i,
            leverage: fit.leverage[i],
        })?;
        let shift = &fit.shift - &xi * (self.data.y()[i] / self.sigma2);
        let mean = solve_lower_transpose(&l, &solve_lower(&l, &shift));
        Ok((l, mean, shift))
    }

    /// `p(theta | y_{-i})`.
    pub fn loo_posterior(&self, i: usize) -> Result<GaussianDist> {
        let (l, mean, _) = self.loo_parts(i)?;
        GaussianDist::from_precision_chol(mean, l)
    }

    /// `log p(y_{-i})`.
    pub fn log_loo_evidence(&self, i: usize) -> Result<f64> {
        let (l, mean, shift) = self.loo_parts(i)?;
        let yi = self.data.y()[i];
        Ok(self.evidence_from(
            self.n() - 1,
            self.data.y().norm_squared() - yi * yi,
            chol_logdet(&l),
            mean.dot(&shift),
        ))
    }

    /// `log p(y_i | y_{-i})` from the leave-one-out posterior.
    pub fn log_loo_predictive(&self, i: usize) -> Result<f64> {
        let loo = self.loo_posterior(i)?;
        let xi = self.data.row(i);
        let var = self.sigma2 + loo.quad_form_cov(&xi);
        Ok(normal_log_pdf(self.data.y()[i], xi.dot(loo.mean()), var))
    }

    /// `mu_i = p(y_i | y_{-i})`.
    pub fn loo_predictive(&self, i: usize) -> Result<f64> {
        Ok(self.log_loo_predictive(i)?.exp())
    }

    /// All `log mu_i` through leverages and residuals:
    /// `y_i | y_{-i} ~ N(y_i; x_i^T m + ..., sigma2 / (1 - H_ii))`.
    pub fn log_loo_predictives(&self) -> Result<Vec<f64>> {
        let fit = self.fit()?;
        (0..self.n())
            .map(|i| {
                let h = fit.leverage[i];
                self.check_loo(i, h)?;
                let resid = (self.data.y()[i] - fit.fitted[i]) / (1.0 - h);
                Ok(normal_log_pdf(resid, 0.0, self.sigma2 / (1.0 - h)))
            })
            .collect()
    }

    /// Exact LOO-CV criterion `sum_i log p(y_i | y_{-i})`.
    pub fn exact_psi(&self) -> Result<f64> {
        Ok(self.log_loo_predictives()?.iter().sum())
    }

    /// `log p(y_i | y)`-style full-data predictive `∫ p(y_i|theta) p(theta|y)`.
    pub fn log_full_predictive(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let fit = self.fit()?;
        let var = self.sigma2 * (1.0 + fit.leverage[i]);
        Ok(normal_log_pdf(self.data.y()[i], fit.fitted[i], var))
    }

    /// Mixture of leave-one-out posteriors weighted by `alpha`.
    pub fn mixture_exact(&self, alpha: &[f64]) -> Result<MixtureExact> {
        if alpha.len() != self.n() {
            return input(format!("need {} mixture weights, got {}", self.n(), alpha.len()));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return input("mixture weights must be strictly positive and finite");
        }
        let mut components = Vec::with_capacity(self.n());
        let mut log_w = Vec::with_capacity(self.n());
        for (i, a) in alpha.iter().enumerate() {
            let (l, mean, shift) = self.loo_parts(i)?;
            let yi = self.data.y()[i];
            let ev = self.evidence_from(
                self.n() - 1,
                self.data.y().norm_squared() - yi * yi,
                chol_logdet(&l),
                mean.dot(&shift),
            );
            log_w.push(a.ln() + ev);
            components.push(GaussianDist::from_precision_chol(mean, l)?);
        }
        let z = log_sum_exp(&log_w);
        let log_pis: Vec<f64> = log_w.iter().map(|w| w - z).collect();
        let pis = log_pis.iter().map(|l| l.exp()).collect();
        Ok(MixtureExact {
            components,
            pis,
            log_pis,
        })
    }

    pub fn mixture_exact_uniform(&self) -> Result<MixtureExact> {
        self.mixture_exact(&vec![1.0; self.n()])
    }

    /// Tempered posterior `p(theta) prod_i p(y_i|theta)^((n-1)/n)`.
    pub fn bronze_posterior(&self) -> Result<GaussianDist> {
        let x = self.data.x();
        let temp = (self.n() as f64 - 1.0) / self.n() as f64;
        let s2 = self.sigma2 / temp;
        let mut prec = x.tr_mul(x) / s2;
        self.prior.add_precision(&mut prec);
        symmetrize(&mut prec);
        let l = cholesky_lower(prec, "tempered posterior precision")?;
        let shift = x.tr_mul(self.data.y()) / s2 + self.prior.precision_times(&self.theta0);
        let mean = solve_lower_transpose(&l, &solve_lower(&l, &shift));
        GaussianDist::from_precision_chol(mean, l)
    }

    /// Relative asymptotic variance of the classical posterior estimator,
    /// `∫ p(theta|y_{-i})^2 / p(theta|y) dtheta - 1`.
    ///
    /// The integral reduces to the linear predictor: with leverage `h` and
    /// leave-one-out residual `r`, it equals
    /// `(1-h)/sqrt(1-2h) * exp(h (1-h) r^2 / (sigma2 (1-2h)))`, finite iff `h < 1/2`.
    /// Close to the boundary the finite value can overflow to `+inf`.
    pub fn av_post_exact(&self, i: usize) -> Result<AsymptoticVariance> {
        self.check_index(i)?;
        let h = self.leverages()?[i];
        if h >= 0.5 {
            return Ok(AsymptoticVariance::Infinite);
        }
        let fit = self.fit()?;
        let r = (self.data.y()[i] - fit.fitted[i]) / (1.0 - h);
        let log_ratio = (1.0 - h).ln() - 0.5 * (1.0 - 2.0 * h).ln()
            + h * (1.0 - h) * r * r / (self.sigma2 * (1.0 - 2.0 * h));
        Ok(AsymptoticVariance::Finite(log_ratio.exp_m1()))
    }

    /// Upper bound on the mixture estimator's relative asymptotic variance,
    /// `pi_i^{-1} (1 + mu_i^{-1} ∫ p(y_i|theta) p(theta|y) dtheta)`.
    pub fn av_mix_bound(&self, mixture: &MixtureExact, i: usize) -> Result<f64> {
        self.check_index(i)?;
        if mixture.pis.len() != self.n() {
            return input("mixture does not match the model");
        }
        let log_mu = self.log_loo_predictive(i)?;
        let log_full = self.log_full_predictive(i)?;
        Ok((-mixture.log_pis[i]).exp() * (1.0 + (log_full - log_mu).exp()))
    }

    fn sample_set(&self, draws: DMatrix<f64>, source: SampleSource, seed: u64) -> Result<WeightedSampleSet> {
        let thetas = draws
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        WeightedSampleSet::from_draws(self, thetas, source, seed)
    }

    fn draw_from(dist: &GaussianDist, s: usize, rng: &mut Rng) -> DMatrix<f64> {
        let p = dist.dim();
        let z = DMatrix::from_fn(p, s, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut draws = dist
            .precision_chol
            .tr_solve_lower_triangular(&z)
            .expect("triangular factor has a zero diagonal");
        for mut col in draws.column_iter_mut() {
            col += &dist.mean;
        }
        draws
    }

    fn check_draws(s: usize) -> Result<()> {
        if s < 2 {
            return input("need at least 2 draws");
        }
        Ok(())
    }

    /// `S` i.i.d. draws from `p(theta | y)`.
    pub fn sample_posterior_iid(&self, s: usize, seed: u64) -> Result<WeightedSampleSet> {
        Self::check_draws(s)?;
        let dist = self.full_posterior()?;
        let draws = Self::draw_from(&dist, s, &mut rng_from_seed(seed));
        self.sample_set(draws, SampleSource::Posterior, seed)
    }

    /// `S` i.i.d. draws from `p(theta | y_{-i})`.
    pub fn sample_loo_iid(&self, i: usize, s: usize, seed: u64) -> Result<WeightedSampleSet> {
        Self::check_draws(s)?;
        let dist = self.loo_posterior(i)?;
        let draws = Self::draw_from(&dist, s, &mut rng_from_seed(seed));
        self.sample_set(draws, SampleSource::LeaveOneOut(i), seed)
    }

    /// `S` i.i.d. draws from the tempered posterior.
    pub fn sample_bronze_iid(&self, s: usize, seed: u64) -> Result<WeightedSampleSet> {
        Self::check_draws(s)?;
        let dist = self.bronze_posterior()?;
        let draws = Self::draw_from(&dist, s, &mut rng_from_seed(seed));
        self.sample_set(draws, SampleSource::Bronze, seed)
    }

    /// `S` i.i.d. draws from the mixture: a component index from `pi`, then a
    /// Gaussian draw from that leave-one-out posterior. Also returns the
    /// component index of each draw.
    pub fn sample_mixture_iid_with_components(
        &self,
        mixture: &MixtureExact,
        s: usize,
        seed: u64,
    ) -> Result<(WeightedSampleSet, Vec<usize>)> {
        Self::check_draws(s)?;
        if mixture.components.len() != self.n() {
            return input("mixture does not match the model");
        }
        let mut rng = rng_from_seed(seed);
        let labels: Vec<usize> = (0..s).map(|_| mixture.draw_component(&mut rng)).collect();
        let p = self.p();
        let mut draws = DMatrix::zeros(p, s);
        for (k, &c) in labels.iter().enumerate() {
            draws.set_column(k, &mixture.components[c].sample(&mut rng));
        }
        Ok((self.sample_set(draws, SampleSource::Mixture, seed)?, labels))
    }

    pub fn sample_mixture_iid(
        &self,
        mixture: &MixtureExact,
        s: usize,
        seed: u64,
    ) -> Result<WeightedSampleSet> {
        Ok(self.sample_mixture_iid_with_components(mixture, s, seed)?.0)
    }
}

pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * d * d / var
}

impl PointwiseModel for GaussianLinearModel {
    fn dim(&self) -> usize {
        self.p()
    }

    fn n_obs(&self) -> usize {
        self.n()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let p = self.p();
        let d = DVector::from_fn(p, |k, _| theta[k] - self.theta0[k]);
        match &self.prior {
            PriorCovariance::Flat => 0.0,
            PriorCovariance::Isotropic(v) => {
                -0.5 * p as f64 * (LN_2PI + v.ln()) - 0.5 * d.norm_squared() / v
            }
            PriorCovariance::Dense(dp) => {
                let u = solve_lower(&dp.cov_chol, &d);
                -0.5 * p as f64 * LN_2PI - 0.5 * dp.logdet - 0.5 * u.norm_squared()
            }
        }
    }

    fn grad_log_prior(&self, theta: &[f64], grad: &mut [f64]) {
        let p = self.p();
        match &self.prior {
            PriorCovariance::Flat => grad.iter_mut().for_each(|g| *g = 0.0),
            PriorCovariance::Isotropic(v) => {
                for k in 0..p {
                    grad[k] = -(theta[k] - self.theta0[k]) / v;
                }
            }
            PriorCovariance::Dense(dp) => {
                let d = DVector::from_fn(p, |k, _| theta[k] - self.theta0[k]);
                let g = &dp.prec * d;
                for k in 0..p {
                    grad[k] = -g[k];
                }
            }
        }
    }

    fn log_lik_term(&self, i: usize, theta: &[f64]) -> f64 {
        let eta: f64 = self.data.x().row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
        normal_log_pdf(self.data.y()[i], eta, self.sigma2)
    }

    fn grad_log_lik_term(&self, i: usize, theta: &[f64], grad: &mut [f64]) {
        let row = self.data.x().row(i);
        let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let r = (self.data.y()[i] - eta) / self.sigma2;
        for (g, x) in grad.iter_mut().zip(row.iter()) {
            *g = r * x;
        }
    }

    fn log_lik_terms(&self, theta: &[f64], out: &mut [f64]) {
        let x = self.data.x();
        let c = -0.5 * (LN_2PI + self.sigma2.ln());
        for (i, o) in out.iter_mut().enumerate() {
            let eta: f64 = x.row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
            let r = self.data.y()[i] - eta;
            *o = c - 0.5 * r * r / self.sigma2;
        }
    }

    fn add_weighted_lik_grad(&self, theta: &[f64], coef: &[f64], grad: &mut [f64]) {
        let x = self.data.x();
        for (i, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = x.row(i);
            let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            let w = c * (self.data.y()[i] - eta) / self.sigma2;
            for (g, xv) in grad.iter_mut().zip(row.iter()) {
                *g += w * xv;
            }
        }
    }

    fn sample_prior(&self, rng: &mut Rng) -> Option<Vec<f64>> {
        self.prior
            .sample(&self.theta0, rng)
            .map(|v| v.iter().copied().collect())
    }
}

/// Noise variance maximizing the evidence `p(y | sigma2)`, by golden-section
/// search on `log sigma2` over `[1e-6, 1e6]` (tolerance `1e-8`).
///
/// With `prior_scales_with_noise` the prior covariance is `sigma2 * Sigma`.
pub fn empirical_bayes_sigma2(
    data: &Dataset,
    theta0: &DVector<f64>,
    prior: &PriorCovariance,
    prior_scales_with_noise: bool,
) -> Result<f64> {
    let n = data.n();
    let resid = data.y() - data.x() * theta0;
    let base = prior.x_sigma_xt(data.x());
    let log_ev = |log_s2: f64| -> f64 {
        let s2 = log_s2.exp();
        match &base {
            Some(k) => {
                let scale = if prior_scales_with_noise { s2 } else { 1.0 };
                let mut c = k * scale;
                for j in 0..n {
                    c[(j, j)] += s2;
                }
                match cholesky_lower(c, "marginal covariance") {
                    Ok(l) => {
                        let u = solve_lower(&l, &resid);
                        -0.5 * chol_logdet(&l) - 0.5 * u.norm_squared()
                    }
                    Err(_) => f64::NEG_INFINITY,
                }
            }
            None => GaussianLinearModel::new(data.clone(), s2, theta0.clone(), PriorCovariance::Flat)
                .and_then(|m| m.log_evidence())
                .unwrap_or(f64::NEG_INFINITY),
        }
    };
    let best = golden_section_max(log_ev, 1e-6f64.ln(), 1e6f64.ln(), 1e-8);
    let s2 = best.exp();
    if !s2.is_finite() {
        return Err(Error::Numerical("evidence maximization failed".into()));
    }
    Ok(s2)
}

/// Maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
