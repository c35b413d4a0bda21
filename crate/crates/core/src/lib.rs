//! Monte Carlo estimators of Bayesian leave-one-out predictive densities,
//! together with exact reference computations for conjugate Gaussian models
//! and a Hamiltonian Monte Carlo sampler for the non-conjugate ones.

pub mod conjugate;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod hmc;
pub mod linalg;
pub mod lse;
pub mod model;
pub mod psis;
pub mod rng;

pub use data::Dataset;
pub use error::{Error, Result};
pub use lse::log_sum_exp;
pub use model::{PointwiseModel, SampleSource, TargetDensity, TargetKind, WeightedSampleSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
