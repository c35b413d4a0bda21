//! Experiment harness for leave-one-out predictive density estimators:
//! synthetic Gaussian designs, CSV estimation, replicate orchestration and
//! result tables.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod output;
pub mod synthetic;

pub use config::{Design, ExperimentConfig, PriorSpec, RawConfig};
pub use error::{CliError, Result};
pub use experiments::run;
pub use output::{Point, ResultTable};
