//! Hamiltonian Monte Carlo with a jittered fixed number of leapfrog steps,
//! dual-averaging step-size adaptation and windowed diagonal mass adaptation.
//!
//! Warmup is split into an initial step-size phase (15%), a mass-adaptation
//! phase made of doubling windows (75%), and a final step-size phase (10%).
//! Chains run in parallel, chain `c` seeded with `derive_seed(seed, c)`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{ess_bulk, split_rhat};
use crate::error::{input, Error, Result};
use crate::model::{TargetDensity, TargetScratch, WeightedSampleSet};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// An energy error above this many nats is a divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeapfrogSteps {
    Fixed(usize),
    /// Uniform on `lo..=hi`, redrawn every iteration.
    Jittered { lo: usize, hi: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// A prior draw when the model has a proper prior, otherwise zero.
    Auto,
    Zero,
    PriorDraw,
    User(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub n_leapfrog: LeapfrogSteps,
    pub target_accept: f64,
    pub warmup: usize,
    pub draws: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_leapfrog: LeapfrogSteps::Jittered { lo: 16, hi: 48 },
            target_accept: 0.8,
            warmup: 1000,
            draws: 1000,
            n_chains: 4,
            seed: 0,
            init: Init::Auto,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup < 100 {
            return input(format!("warmup must be at least 100, got {}", self.warmup));
        }
        if self.draws < 2 {
            return input("need at least 2 draws per chain");
        }
        if self.n_chains == 0 {
            return input("need at least one chain");
        }
        if !(self.target_accept > 0.5 && self.target_accept <= 0.99) {
            return input(format!(
                "target acceptance must be in (0.5, 0.99], got {}",
                self.target_accept
            ));
        }
        match self.n_leapfrog {
            LeapfrogSteps::Fixed(0) => input("need at least one leapfrog step"),
            LeapfrogSteps::Jittered { lo, hi } if lo == 0 || lo > hi => {
                input(format!("invalid leapfrog range {lo}..={hi}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub split_rhat: Vec<f64>,
    pub ess_bulk: Vec<f64>,
    pub accept_rate: f64,
    pub divergence_count: usize,
}

impl ChainDiagnostics {
    /// Largest R-hat across dimensions, ignoring undefined entries.
    pub fn max_rhat(&self) -> f64 {
        self.split_rhat
            .iter()
            .copied()
            .filter(|r| !r.is_nan())
            .fold(f64::NAN, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct HmcOutput {
    /// Post-warmup draws of all chains, chain by chain.
    pub samples: WeightedSampleSet,
    pub diagnostics: ChainDiagnostics,
    pub step_sizes: Vec<f64>,
    pub inv_mass: Vec<Vec<f64>>,
    /// `chains[c][t]` is draw `t` of chain `c`.
    pub chains: Vec<Vec<Vec<f64>>>,
}

struct ChainResult {
    draws: Vec<Vec<f64>>,
    accept_sum: f64,
    divergences: usize,
    step_size: f64,
    inv_mass: Vec<f64>,
}

/// Stan's dual-averaging controller on `log(step size)`.
struct DualAveraging {
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    count: f64,
    delta: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(step: f64, delta: f64) -> Self {
        Self {
            mu: (10.0 * step).ln(),
            s_bar: 0.0,
            x_bar: 0.0,
            count: 0.0,
            delta,
        }
    }

    /// Returns the next step size to try.
    fn update(&mut self, accept: f64) -> f64 {
        self.count += 1.0;
        let eta = 1.0 / (self.count + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept);
        let x = self.mu - self.s_bar * self.count.sqrt() / Self::GAMMA;
        let w = self.count.powf(-Self::KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

struct Integrator<'t, 'm> {
    target: &'t TargetDensity<'m>,
    scratch: TargetScratch,
    inv_mass: Vec<f64>,
}

struct State {
    theta: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl Integrator<'_, '_> {
    fn eval(&mut self, theta: Vec<f64>) -> State {
        let mut grad = vec![0.0; theta.len()];
        let logp = self
            .target
            .log_density_grad(&theta, &mut grad, &mut self.scratch);
        State { theta, grad, logp }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_mass).map(|(pk, m)| pk * pk * m).sum::<f64>()
    }

    fn momentum(&self, rng: &mut Rng) -> Vec<f64> {
        self.inv_mass
            .iter()
            .map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt())
            .collect()
    }

    /// `steps` leapfrog steps; returns the end state and momentum, or `None`
    /// once the log-density becomes non-finite.
    fn leapfrog(&mut self, start: &State, p0: &[f64], eps: f64, steps: usize) -> Option<(State, Vec<f64>)> {
        let mut p = p0.to_vec();
        let mut theta = start.theta.clone();
        let mut grad = start.grad.clone();
        let mut logp = start.logp;
        for _ in 0..steps {
            for k in 0..p.len() {
                p[k] += 0.5 * eps * grad[k];
                theta[k] += eps * self.inv_mass[k] * p[k];
            }
            logp = self
                .target
                .log_density_grad(&theta, &mut grad, &mut self.scratch);
            if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            for k in 0..p.len() {
                p[k] += 0.5 * eps * grad[k];
            }
        }
        Some((State { theta, grad, logp }, p))
    }

    /// Energy change `H(end) - H(start)` of one trajectory, `inf` on failure.
    pub fn energy_error(&mut self, start: &State, p0: &[f64], eps: f64, steps: usize) -> f64 {
        let h0 = -start.logp + self.kinetic(p0);
        match self.leapfrog(start, p0, eps, steps) {
            Some((end, p)) => {
                let h1 = -end.logp + self.kinetic(&p);
                if h1.is_finite() {
                    h1 - h0
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        }
    }

    fn reasonable_step(&mut self, state: &State, rng: &mut Rng) -> f64 {
        let mut eps = 1.0;
        let p = self.momentum(rng);
        let log_accept = |de: f64| if de.is_finite() { -de } else { f64::NEG_INFINITY };
        let first = log_accept(self.energy_error(state, &p, eps, 1));
        let dir = if first > 0.5f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..100 {
            let la = log_accept(self.energy_error(state, &p, eps, 1));
            if dir * la <= -dir * 2f64.ln() {
                break;
            }
            eps *= 2f64.powf(dir);
        }
        eps.clamp(1e-10, 1e3)
    }
}

/// Ends (exclusive, as warmup iteration indices) of the mass-adaptation windows.
fn window_ends(warmup: usize) -> (usize, usize, Vec<usize>) {
    let init = (0.15 * warmup as f64).floor() as usize;
    let term = (0.10 * warmup as f64).floor() as usize;
    let slow_end = warmup - term;
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = 25usize.min(slow_end - init);
    while start < slow_end {
        let mut end = start + size;
        let next = 2 * size;
        if end + next > slow_end {
            end = slow_end;
        }
        ends.push(end);
        start = end;
        size = next;
    }
    (init, slow_end, ends)
}

fn regularized_variance(draws: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = draws.len() as f64;
    (0..d)
        .map(|k| {
            let m = draws.iter().map(|t| t[k]).sum::<f64>() / n;
            let v = draws.iter().map(|t| (t[k] - m) * (t[k] - m)).sum::<f64>() / (n - 1.0);
            (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}

fn run_chain(target: &TargetDensity<'_>, cfg: &HmcConfig, chain: usize) -> Result<ChainResult> {
    let d = target.dim();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, chain as u64));
    let model = target.model();
    let theta0 = match &cfg.init {
        Init::Zero => vec![0.0; d],
        Init::User(v) => {
            if v.len() != d {
                return input(format!("initial point has length {}, expected {d}", v.len()));
            }
            v.clone()
        }
        Init::PriorDraw => model
            .sample_prior(&mut rng)
            .ok_or_else(|| Error::Input("the prior is improper; cannot draw an initial point".into()))?,
        Init::Auto => model.sample_prior(&mut rng).unwrap_or_else(|| vec![0.0; d]),
    };
    let mut integ = Integrator {
        target,
        scratch: TargetScratch::new(model.n_obs()),
        inv_mass: vec![1.0; d],
    };
    let mut state = integ.eval(theta0);
    if !state.logp.is_finite() || state.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "chain {chain}: log-density is not finite at the initial point"
        )));
    }

    let mut eps = integ.reasonable_step(&state, &mut rng);
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    let (init_end, slow_end, windows) = window_ends(cfg.warmup);
    let mut next_window = 0;
    let mut window_draws: Vec<Vec<f64>> = Vec::new();

    let mut draws = Vec::with_capacity(cfg.draws);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    let total = cfg.warmup + cfg.draws;
    for it in 0..total {
        let warming = it < cfg.warmup;
        let steps = match cfg.n_leapfrog {
            LeapfrogSteps::Fixed(l) => l,
            LeapfrogSteps::Jittered { lo, hi } => rng.random_range(lo..=hi),
        };
        let p0 = integ.momentum(&mut rng);
        let h0 = -state.logp + integ.kinetic(&p0);
        let (accept, proposal, divergent) = match integ.leapfrog(&state, &p0, eps, steps) {
            Some((end, p)) => {
                let h1 = -end.logp + integ.kinetic(&p);
                let de = h1 - h0;
                if !de.is_finite() || de > DIVERGENCE_THRESHOLD {
                    (0.0, None, true)
                } else {
                    ((-de).exp().min(1.0), Some(end), false)
                }
            }
            None => (0.0, None, true),
        };
        if let Some(end) = proposal {
            if rng.random::<f64>() < accept {
                state = end;
            }
        }
        if warming {
            eps = da.update(accept);
            if it >= init_end && it < slow_end {
                window_draws.push(state.theta.clone());
                if next_window < windows.len() && it + 1 == windows[next_window] {
                    if window_draws.len() >= 3 {
                        integ.inv_mass = regularized_variance(&window_draws, d);
                    }
                    window_draws.clear();
                    next_window += 1;
                    eps = integ.reasonable_step(&state, &mut rng);
                    da = DualAveraging::new(eps, cfg.target_accept);
                }
            }
            if it + 1 == cfg.warmup {
                eps = da.final_step();
            }
        } else {
            accept_sum += accept;
            if divergent {
                divergences += 1;
            }
            draws.push(state.theta.clone());
        }
    }
    Ok(ChainResult {
        draws,
        accept_sum,
        divergences,
        step_size: eps,
        inv_mass: integ.inv_mass,
    })
}

/// Runs `cfg.n_chains` chains on `target` and pools their post-warmup draws.
pub fn run_hmc(target: &TargetDensity<'_>, cfg: &HmcConfig) -> Result<HmcOutput> {
    cfg.validate()?;
    let results: Vec<Result<ChainResult>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c))
        .collect();
    let results: Vec<ChainResult> = results.into_iter().collect::<Result<_>>()?;

    let d = target.dim();
    let chains: Vec<Vec<Vec<f64>>> = results.iter().map(|r| r.draws.clone()).collect();
    let per_dim = |k: usize| -> Vec<Vec<f64>> {
        chains
            .iter()
            .map(|c| c.iter().map(|t| t[k]).collect())
            .collect()
    };
    let diagnostics = ChainDiagnostics {
        split_rhat: (0..d).map(|k| split_rhat(&per_dim(k))).collect(),
        ess_bulk: (0..d).map(|k| ess_bulk(&per_dim(k))).collect(),
        accept_rate: results.iter().map(|r| r.accept_sum).sum::<f64>()
            / (cfg.draws * cfg.n_chains) as f64,
        divergence_count: results.iter().map(|r| r.divergences).sum(),
    };
    let pooled: Vec<Vec<f64>> = chains.iter().flatten().cloned().collect();
    let samples =
        WeightedSampleSet::from_draws(target.model(), pooled, target.kind().tag(), cfg.seed)?;
    Ok(HmcOutput {
        samples,
        diagnostics,
        step_sizes: results.iter().map(|r| r.step_size).collect(),
        inv_mass: results.into_iter().map(|r| r.inv_mass).collect(),
        chains,
    })
}

/// Energy error of one leapfrog trajectory from `theta` with momentum `p`,
/// identity mass and fixed step size.
pub fn trajectory_energy_error(
    target: &TargetDensity<'_>,
    theta: &[f64],
    p: &[f64],
    step_size: f64,
    steps: usize,
) -> Result<f64> {
    if theta.len() != target.dim() || p.len() != target.dim() {
        return input("position and momentum must match the target dimension");
    }
    let mut integ = Integrator {
        target,
        scratch: TargetScratch::new(target.model().n_obs()),
        inv_mass: vec![1.0; target.dim()],
    };
    let start = integ.eval(theta.to_vec());
    Ok(integ.energy_error(&start, p, step_size, steps))
}
