//! Gaussian predictive density estimation under Kullback-Leibler risk.
//!
//! The crate covers shrinkage location estimators and their quadratic-risk
//! estimates, flattened Gaussian predictive densities, exact and Monte Carlo
//! risk evaluation, regularity certification across dimensions, closed-form
//! risk bounds, sparse threshold rules, a quantized-divergence bound for
//! overlapping events, and the baseball shrinkage example.
//!
//! All computations accept arbitrary past/future variances. Internally the
//! past variance is normalized to one.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod betting;
pub mod bounds;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harmonic;
pub mod kl;
pub mod mc;
pub mod model;
pub mod quad;
pub mod rasl;
pub mod risk_estimates;
pub mod sparse;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::LocationEstimator;
pub use model::{
    make_problem, sample_past, GaussianPredictiveDensity, McConfig, Method, ParamPoint,
    PredictiveProblem, RiskReport, Scale,
};

/// Seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_110_503;
