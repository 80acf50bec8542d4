//! Estimates of quadratic risk and the flattening coefficients built from
//! them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{centered_parts, CenteredDf};
use crate::model::PredictiveProblem;
use crate::stats::norm_sq;

/// Unbiased risk estimate of James-Stein: `n - (n-2)^2 / ||x||^2` (scaled
/// by `sigma_p2`). May be negative.
pub fn sure_js(problem: &PredictiveProblem, x: &[f64]) -> Result<f64> {
    if problem.n() < 3 {
        return invalid("james-stein risk estimate needs dimension >= 3");
    }
    problem.check_len(x, "observation")?;
    let s = norm_sq(x) / problem.sigma_p2();
    if s == 0.0 {
        return Err(Error::Degenerate("risk estimate is undefined at x = 0".into()));
    }
    let n = problem.n() as f64;
    Ok(problem.sigma_p2() * (n - (n - 2.0) * (n - 2.0) / s))
}

/// Positive part of [`sure_js`]; zero at the origin.
pub fn sure_js_plus(problem: &PredictiveProblem, x: &[f64]) -> Result<f64> {
    if problem.n() < 3 {
        return invalid("james-stein risk estimate needs dimension >= 3");
    }
    problem.check_len(x, "observation")?;
    if norm_sq(x) == 0.0 {
        return Ok(0.0);
    }
    Ok(sure_js(problem, x)?.max(0.0))
}

/// `(n - k^2 / ||x - xbar||^2)_+` with `k` from `df`.
pub fn sure_js_plus_centered(problem: &PredictiveProblem, x: &[f64], df: CenteredDf) -> Result<f64> {
    problem.check_len(x, "observation")?;
    let (_, dev) = centered_parts(x);
    let s = norm_sq(&dev) / problem.sigma_p2();
    if s == 0.0 {
        return Ok(0.0);
    }
    let n = problem.n() as f64;
    let k = df.constant(problem.n());
    Ok(problem.sigma_p2() * (n - k * k / s).max(0.0))
}

/// Score of a spherically symmetric marginal at a unit-variance point.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalScore {
    /// `grad log m(x)`
    pub grad_log: Vec<f64>,
    /// `laplacian m(x) / m(x)`
    pub laplacian_ratio: f64,
}

/// A prior marginal that can report its score.
pub trait RadialMarginal: Sync {
    fn score(&self, x: &[f64]) -> Result<MarginalScore>;
}

/// Improper flat prior; its marginal is constant.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatPrior;

impl RadialMarginal for FlatPrior {
    fn score(&self, x: &[f64]) -> Result<MarginalScore> {
        Ok(MarginalScore {
            grad_log: vec![0.0; x.len()],
            laplacian_ratio: 0.0,
        })
    }
}

/// Unbiased risk estimate of the posterior mean `x + grad log m(x)`:
/// `n - ||grad log m||^2 + 2 laplacian m / m`.
pub fn tweedie_risk_estimate(problem: &PredictiveProblem, x: &[f64], marginal: &dyn RadialMarginal) -> Result<f64> {
    problem.check_len(x, "observation")?;
    let s = marginal.score(&problem.unit_coords(x))?;
    let u = problem.n() as f64 - norm_sq(&s.grad_log) + 2.0 * s.laplacian_ratio;
    if !u.is_finite() {
        return Err(Error::Numerical(format!("non-finite risk estimate {u}")));
    }
    Ok(problem.sigma_p2() * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlattenSource {
    SurePlus,
    Tweedie,
    OracleIf,
    Custom,
}

/// Scale `c` of `g[theta_hat, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatteningCoefficient {
    pub value: f64,
    pub source: FlattenSource,
}

/// `1 + u_hat / (n sigma_f2)`.
pub fn flattening(problem: &PredictiveProblem, u_hat: f64, source: FlattenSource) -> Result<FlatteningCoefficient> {
    if !u_hat.is_finite() {
        return invalid(format!("risk estimate is not finite: {u_hat}"));
    }
    if matches!(source, FlattenSource::SurePlus | FlattenSource::OracleIf) && u_hat < 0.0 {
        return invalid(format!("{source:?} flattening needs a nonnegative risk estimate, got {u_hat}"));
    }
    let value = 1.0 + u_hat / (problem.n() as f64 * problem.sigma_f2());
    if !(value > 0.0) {
        return invalid(format!("flattening coefficient {value} is not positive"));
    }
    Ok(FlatteningCoefficient { value, source })
}

/// Ideal flattening `1 + q / (n sigma_f2)` for a known quadratic risk `q`.
pub fn ideal_flattening(problem: &PredictiveProblem, q: f64) -> Result<FlatteningCoefficient> {
    if !(q >= 0.0) {
        return invalid(format!("quadratic risk must be nonnegative, got {q}"));
    }
    flattening(problem, q, FlattenSource::OracleIf)
}
