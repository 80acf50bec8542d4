//! Location estimators `x -> theta_hat(x)`.
//!
//! All rules accept observations in the problem's own units and rescale to
//! unit past variance internally.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harmonic;
use crate::model::PredictiveProblem;
use crate::risk_estimates;
use crate::stats::norm_sq;

pub type EstimateFn = dyn Fn(&PredictiveProblem, &[f64]) -> Result<Vec<f64>> + Send + Sync;
pub type RiskEstimateFn = dyn Fn(&PredictiveProblem, &[f64]) -> Result<f64> + Send + Sync;

/// A named location rule with an optional companion estimate of its
/// quadratic risk.
#[derive(Clone)]
pub struct LocationEstimator {
    name: String,
    estimate: Arc<EstimateFn>,
    risk_estimator: Option<Arc<RiskEstimateFn>>,
}

impl fmt::Debug for LocationEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocationEstimator")
            .field("name", &self.name)
            .field("has_risk_estimator", &self.risk_estimator.is_some())
            .finish()
    }
}

impl LocationEstimator {
    pub fn new<F>(name: impl Into<String>, estimate: F) -> Self
    where
        F: Fn(&PredictiveProblem, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            estimate: Arc::new(estimate),
            risk_estimator: None,
        }
    }

    pub fn with_risk_estimator<G>(mut self, risk: G) -> Self
    where
        G: Fn(&PredictiveProblem, &[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        self.risk_estimator = Some(Arc::new(risk));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn estimate(&self, problem: &PredictiveProblem, x: &[f64]) -> Result<Vec<f64>> {
        problem.check_len(x, "observation")?;
        let out = (self.estimate)(problem, x)?;
        if out.len() != x.len() {
            return Err(Error::Numerical(format!(
                "estimator {} returned length {} for input length {}",
                self.name,
                out.len(),
                x.len()
            )));
        }
        Ok(out)
    }

    pub fn has_risk_estimator(&self) -> bool {
        self.risk_estimator.is_some()
    }

    /// Companion quadratic-risk estimate, in the problem's units.
    pub fn risk_estimate(&self, problem: &PredictiveProblem, x: &[f64]) -> Result<f64> {
        match &self.risk_estimator {
            Some(f) => f(problem, x),
            None => invalid(format!("estimator {} has no risk estimator", self.name)),
        }
    }

    pub fn umvue() -> Self {
        Self::new("umvue", umvue).with_risk_estimator(|p, _| Ok(p.n() as f64 * p.sigma_p2()))
    }

    /// James-Stein with the clipped unbiased risk estimate as companion.
    pub fn james_stein() -> Self {
        Self::new("js", james_stein).with_risk_estimator(risk_estimates::sure_js_plus)
    }

    /// James-Stein paired with the raw (possibly negative) unbiased risk
    /// estimate.
    pub fn james_stein_raw_sure() -> Self {
        Self::new("js-raw", james_stein).with_risk_estimator(risk_estimates::sure_js)
    }

    pub fn james_stein_plus() -> Self {
        Self::new("js+", james_stein_plus).with_risk_estimator(risk_estimates::sure_js_plus)
    }

    /// Harmonic posterior mean with the clipped Tweedie risk estimate.
    pub fn harmonic() -> Self {
        Self::new("harmonic", harmonic_posterior_mean).with_risk_estimator(|p, x| {
            Ok(risk_estimates::tweedie_risk_estimate(p, x, &harmonic::HarmonicPrior)?.max(0.0))
        })
    }

    pub fn ideal_linear(a: f64) -> Result<Self> {
        if !(a >= 0.0) {
            return invalid(format!("signal strength must be nonnegative, got {a}"));
        }
        Ok(Self::new(format!("ideal-linear({a})"), move |p, x| ideal_linear(p, x, a)))
    }

    pub fn rasl_violator() -> Self {
        Self::new("violator", rasl_violator)
    }

    /// `x -> k x`.
    pub fn scaled(k: f64) -> Self {
        Self::new(format!("scaled({k})"), move |_, x| Ok(x.iter().map(|v| k * v).collect()))
    }

    /// Returns `theta` regardless of the data.
    pub fn oracle(theta: Vec<f64>) -> Self {
        let n = theta.len();
        Self::new("oracle", move |_, x| {
            if x.len() != n {
                return invalid("oracle dimension mismatch");
            }
            Ok(theta.clone())
        })
        .with_risk_estimator(|_, _| Ok(0.0))
    }

    /// Shrinkage toward the grand mean of the coordinates.
    pub fn james_stein_plus_centered(df: CenteredDf) -> Self {
        Self::new(format!("js+-centered({df})"), move |p, x| james_stein_plus_centered(p, x, df))
            .with_risk_estimator(move |p, x| risk_estimates::sure_js_plus_centered(p, x, df))
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "umvue" => Self::umvue(),
            "js" => Self::james_stein(),
            "js-raw" => Self::james_stein_raw_sure(),
            "js+" | "js-plus" => Self::james_stein_plus(),
            "harmonic" => Self::harmonic(),
            "violator" => Self::rasl_violator(),
            _ => return None,
        })
    }
}

/// Degrees of freedom of the grand-mean-centered shrinkage factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CenteredDf {
    /// `(n - 2) / ||x - xbar||^2`, the uncentered constant reused as is.
    #[default]
    NMinus2,
    /// `(n - 3) / ||x - xbar||^2`.
    NMinus3,
}

impl CenteredDf {
    pub fn constant(&self, n: usize) -> f64 {
        match self {
            CenteredDf::NMinus2 => n as f64 - 2.0,
            CenteredDf::NMinus3 => n as f64 - 3.0,
        }
    }
}

impl fmt::Display for CenteredDf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CenteredDf::NMinus2 => "n-2",
            CenteredDf::NMinus3 => "n-3",
        })
    }
}

pub fn umvue(_problem: &PredictiveProblem, x: &[f64]) -> Result<Vec<f64>> {
    Ok(x.to_vec())
}

fn require_dim(problem: &PredictiveProblem, min: usize, what: &str) -> Result<()> {
    if problem.n() < min {
        return invalid(format!("{what} needs dimension >= {min}, got {}", problem.n()));
    }
    Ok(())
}

/// `x (1 - (n-2) sigma_p2 / ||x||^2)`.
pub fn james_stein(problem: &PredictiveProblem, x: &[f64]) -> Result<Vec<f64>> {
    require_dim(problem, 3, "james-stein")?;
    problem.check_len(x, "observation")?;
    let s = norm_sq(x) / problem.sigma_p2();
    if s == 0.0 {
        return Err(Error::Degenerate("james-stein is undefined at x = 0".into()));
    }
    let f = 1.0 - (problem.n() as f64 - 2.0) / s;
    Ok(x.iter().map(|v| v * f).collect())
}

pub fn james_stein_plus(problem: &PredictiveProblem, x: &[f64]) -> Result<Vec<f64>> {
    require_dim(problem, 3, "positive-part james-stein")?;
    problem.check_len(x, "observation")?;
    let s = norm_sq(x) / problem.sigma_p2();
    let f = if s == 0.0 {
        0.0
    } else {
        (1.0 - (problem.n() as f64 - 2.0) / s).max(0.0)
    };
    Ok(x.iter().map(|v| v * f).collect())
}

pub(crate) fn centered_parts(x: &[f64]) -> (f64, Vec<f64>) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (m, x.iter().map(|v| v - m).collect())
}

/// Positive-part shrinkage of the deviations from the coordinate mean.
pub fn james_stein_plus_centered(problem: &PredictiveProblem, x: &[f64], df: CenteredDf) -> Result<Vec<f64>> {
    require_dim(problem, 4, "centered james-stein")?;
    problem.check_len(x, "observation")?;
    let (m, dev) = centered_parts(x);
    let s = norm_sq(&dev) / problem.sigma_p2();
    let f = if s == 0.0 {
        0.0
    } else {
        (1.0 - df.constant(problem.n()) / s).max(0.0)
    };
    Ok(dev.iter().map(|d| m + f * d).collect())
}

pub fn harmonic_posterior_mean(problem: &PredictiveProblem, x: &[f64]) -> Result<Vec<f64>> {
    require_dim(problem, 3, "harmonic posterior mean")?;
    problem.check_len(x, "observation")?;
    Ok(problem.raw_coords(harmonic::posterior_mean_unit(&problem.unit_coords(x))?))
}

/// `(a / (1 + a)) x` for a known signal strength `a = ||theta||^2 / n`
/// (in past-variance units).
pub fn ideal_linear(problem: &PredictiveProblem, x: &[f64], a: f64) -> Result<Vec<f64>> {
    if !(a >= 0.0) {
        return invalid(format!("signal strength must be nonnegative, got {a}"));
    }
    problem.check_len(x, "observation")?;
    let f = if a.is_infinite() { 1.0 } else { a / (1.0 + a) };
    Ok(x.iter().map(|v| v * f).collect())
}

/// Inflates the first coordinate by `sqrt(n / (2 log n))` whenever it falls
/// below `sqrt(2 log n)`; other coordinates pass through.
pub fn rasl_violator(problem: &PredictiveProblem, x: &[f64]) -> Result<Vec<f64>> {
    require_dim(problem, 2, "violator")?;
    problem.check_len(x, "observation")?;
    let n = problem.n() as f64;
    let cut = (2.0 * n.ln()).sqrt();
    let sp = problem.sigma_p();
    let mut out = x.to_vec();
    if x[0] / sp < cut {
        out[0] = x[0] * (n / (2.0 * n.ln())).sqrt();
    }
    Ok(out)
}

/// Pointwise convex combination of estimators.
pub fn convex_mixture(estimators: &[LocationEstimator], weights: &[f64]) -> Result<LocationEstimator> {
    if estimators.is_empty() || estimators.len() != weights.len() {
        return invalid("need one weight per estimator and at least one estimator");
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return invalid("mixture weights must be nonnegative");
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return invalid(format!("mixture weights sum to {total}, not 1"));
    }
    let parts: Vec<(f64, LocationEstimator)> = weights.iter().copied().zip(estimators.iter().cloned()).collect();
    let name = parts
        .iter()
        .map(|(w, e)| format!("{w}*{}", e.name()))
        .collect::<Vec<_>>()
        .join("+");
    Ok(LocationEstimator::new(name, move |p, x| {
        let mut out = vec![0.0; x.len()];
        for (w, e) in &parts {
            if *w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(e.estimate(p, x)?) {
                *o += w * v;
            }
        }
        Ok(out)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_problem;

    fn unit(n: usize) -> PredictiveProblem {
        make_problem(n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn umvue_is_identity() {
        assert_eq!(umvue(&unit(3), &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn james_stein_examples() {
        let p = unit(10);
        let mut x = vec![0.0; 10];
        x[0] = 8f64.sqrt();
        assert!(james_stein(&p, &x).unwrap().iter().all(|v| v.abs() < 1e-15));
        x[0] = 3.0;
        let out = james_stein(&p, &x).unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(out[1..].iter().all(|v| *v == 0.0));
        assert!(matches!(james_stein(&p, &[0.0; 10]), Err(Error::Degenerate(_))));
        assert!(james_stein(&unit(2), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn james_stein_flips_inside_the_ball() {
        let p = unit(10);
        let mut x = vec![0.0; 10];
        x[0] = 2.0;
        assert!(james_stein(&p, &x).unwrap()[0] < 0.0);
    }

    #[test]
    fn positive_part_examples() {
        let p = unit(10);
        let mut x = vec![0.0; 10];
        x[0] = 2.0;
        assert!(james_stein_plus(&p, &x).unwrap().iter().all(|v| *v == 0.0));
        x[0] = 5.0;
        assert_eq!(james_stein_plus(&p, &x).unwrap(), james_stein(&p, &x).unwrap());
        assert_eq!(james_stein_plus(&p, &[0.0; 10]).unwrap(), vec![0.0; 10]);
    }

    #[test]
    fn ideal_linear_limits() {
        let p = unit(3);
        assert_eq!(ideal_linear(&p, &[1.0, 2.0, 3.0], 0.0).unwrap(), vec![0.0; 3]);
        assert_eq!(ideal_linear(&p, &[1.0, 2.0, 3.0], f64::INFINITY).unwrap(), vec![1.0, 2.0, 3.0]);
        let big = ideal_linear(&p, &[1.0, 0.0, 0.0], 1e12).unwrap();
        assert!((big[0] - 1.0).abs() < 1e-11);
        assert!(ideal_linear(&p, &[1.0; 3], -0.1).is_err());
    }

    #[test]
    fn violator_examples() {
        let p = unit(100);
        let mut x = vec![0.3; 100];
        x[0] = 5.0;
        assert_eq!(rasl_violator(&p, &x).unwrap(), x);
        x[0] = 1.0;
        let out = rasl_violator(&p, &x).unwrap();
        assert!((out[0] - (100.0 / (2.0 * 100f64.ln())).sqrt()).abs() < 1e-12);
        assert!((out[0] - 3.295).abs() < 1e-3);
        assert_eq!(&out[1..], &x[1..]);
        x[0] = 0.0;
        assert_eq!(rasl_violator(&p, &x).unwrap()[0], 0.0);
        // threshold sqrt(2 log 100)
        assert!(((2.0 * 100f64.ln()).sqrt() - 3.0349).abs() < 1e-4);
    }

    #[test]
    fn harmonic_at_origin_is_zero() {
        assert_eq!(harmonic_posterior_mean(&unit(5), &[0.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn harmonic_shrinks_strictly() {
        let p = unit(6);
        let x = [1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        let out = harmonic_posterior_mean(&p, &x).unwrap();
        let f = out[0] / x[0];
        assert!(f > 0.0 && f < 1.0);
        for (o, v) in out.iter().zip(&x) {
            assert!((o - f * v).abs() < 1e-14);
        }
    }

    #[test]
    fn mixtures() {
        let p = unit(20);
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let js = LocationEstimator::james_stein();
        let um = LocationEstimator::umvue();
        let first = convex_mixture(&[js.clone(), um.clone()], &[1.0, 0.0]).unwrap();
        assert_eq!(first.estimate(&p, &x).unwrap(), js.estimate(&p, &x).unwrap());
        let same = convex_mixture(&[js.clone(), js.clone()], &[0.3, 0.7]).unwrap();
        for (a, b) in same.estimate(&p, &x).unwrap().iter().zip(js.estimate(&p, &x).unwrap()) {
            assert!((a - b).abs() < 1e-14);
        }
        let half = convex_mixture(&[um, js.clone()], &[0.5, 0.5]).unwrap();
        let j = js.estimate(&p, &x).unwrap();
        for ((h, xi), ji) in half.estimate(&p, &x).unwrap().iter().zip(&x).zip(&j) {
            assert!((h - 0.5 * (xi + ji)).abs() < 1e-14);
        }
        assert!(convex_mixture(std::slice::from_ref(&js), &[0.9]).is_err());
        assert!(convex_mixture(&[js.clone(), js], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn centered_js_keeps_equal_coordinates() {
        let p = unit(8);
        let x = [0.7; 8];
        let out = james_stein_plus_centered(&p, &x, CenteredDf::NMinus2).unwrap();
        assert!(out.iter().all(|v| (*v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn rescaling_commutes() {
        // estimates in raw units equal sigma_p times estimates on x / sigma_p
        let raw = make_problem(7, 4.0, 2.0).unwrap();
        let unitp = make_problem(7, 1.0, 0.5).unwrap();
        let x = [1.0, -3.0, 0.2, 4.0, 2.2, -0.1, 0.9];
        let xu: Vec<f64> = x.iter().map(|v| v / 2.0).collect();
        for e in [LocationEstimator::james_stein(), LocationEstimator::james_stein_plus(), LocationEstimator::harmonic()] {
            let a = e.estimate(&raw, &x).unwrap();
            let b = e.estimate(&unitp, &xu).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - 2.0 * v).abs() < 1e-12);
            }
        }
    }
}
