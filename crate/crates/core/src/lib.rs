//! Linear Gaussian structural equation models for exposure-mixture bias
//! studies: scenario DAGs with closed-form oracles, reproducible data
//! generation, least-squares estimators and a Monte Carlo harness.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod scenario;
pub mod sem;

pub use datagen::{Dataset, GenMethod, Provenance};
pub use error::{Error, Result};
pub use estimate::{fit_mixture, moment_ols, ols, RegressionResult};
pub use harness::{BiasReport, ExperimentConfig, SweepPolicy, SweepResult};
pub use scenario::{OracleCoefficients, PsiOracle, ScenarioKind, ScenarioSpec};
pub use sem::{CovarianceMatrix, LinearSem};
