//! Dynamic growth production functions with endogenous nutrient inputs:
//! IV/LIML estimation, weak-instrument diagnostics, instrument-set sweeps,
//! dietary counterfactuals, count models and a structural data generator.

pub mod count_models;
pub mod counterfactual;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod linalg;
pub mod scalar;
pub mod stats;
pub mod sweep;
pub mod synth;

pub use domain::{Country, Model, Outcome};
pub use error::{Error, Result};
pub use scalar::Real;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Double-precision design used by the pipeline.
pub type DesignMatrices = estimators::DesignMatrices<f64>;
/// Double-precision fit used by the pipeline.
pub type FitResult = estimators::FitResult<f64>;
