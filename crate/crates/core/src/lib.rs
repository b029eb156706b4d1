//! Bayesian model averaging (exact enumeration and MC3) and instrumental-variable
//! BMA via MC3-within-Gibbs, together with the cross-country data pipeline that
//! feeds them and the reporting layer that renders their output.
//!
//! Module map:
//!
//! * [`pipeline`]: panel CSV ingestion, window averaging, transforms, design assembly, diagnostics.
//! * [`model_space`]: inclusion masks, uniform model prior, flip proposals, enumeration.
//! * [`bma`]: g-prior marginal likelihoods, exact BMA, MC3 sampling.
//! * [`ivbma`]: the two-stage Gibbs sampler with conditional-Bayes-factor model moves.
//! * [`synthetic`]: ground-truth generators and independent oracles.
//! * [`report`]: evidence classes, table rendering, draw export, and the `run` orchestration.

pub mod bma;
pub mod error;
pub mod ivbma;
pub(crate) mod linalg;
pub mod model_space;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
