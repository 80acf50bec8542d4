//! Threshold predictive densities for sparse mean vectors.
//!
//! All univariate quantities are in units of the past standard deviation;
//! a coordinate's KL loss for `N(m, d sigma_f2)` is
//! `(log d + 1/d - 1)/2 + (m - theta)^2 / (2 d r)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::estimators::LocationEstimator;
use crate::mc;
use crate::model::{draw_past, McConfig, Method, ParamPoint, PredictiveProblem, RiskReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseSpace {
    n: usize,
    s: usize,
}

impl SparseSpace {
    pub fn new(n: usize, s: usize) -> Result<Self> {
        if n == 0 || s > n {
            return invalid(format!("need 0 <= s <= n and n >= 1, got n = {n}, s = {s}"));
        }
        Ok(Self { n, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.n && theta.iter().filter(|t| **t != 0.0).count() <= self.s
    }
}

/// Location used above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerLocation {
    #[default]
    Identity,
    /// `sign(x) (|x| - lambda)`
    Soft,
}

/// Scale multiplier `d` used above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InnerScale {
    Unit,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    eta: f64,
    lambda: f64,
    pub inner_location: InnerLocation,
    pub inner_scale: InnerScale,
}

impl ThresholdRule {
    /// Threshold `sqrt(2 log(1/eta))` with the plug-in rule above it.
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return invalid(format!("eta must lie in (0, 1), got {eta}"));
        }
        Ok(Self {
            eta,
            lambda: (2.0 * (1.0 / eta).ln()).sqrt(),
            inner_location: InnerLocation::Identity,
            inner_scale: InnerScale::Unit,
        })
    }

    /// Overrides the threshold, keeping `eta` for rate comparisons.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("threshold must be nonnegative, got {lambda}"));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_inner(mut self, location: InnerLocation, scale: InnerScale) -> Result<Self> {
        if let InnerScale::Fixed(d) = scale {
            if !(d > 0.0 && d.is_finite()) {
                return invalid(format!("inner scale must be positive, got {d}"));
            }
        }
        self.inner_location = location;
        self.inner_scale = scale;
        Ok(self)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn scale(&self) -> f64 {
        match self.inner_scale {
            InnerScale::Unit => 1.0,
            InnerScale::Fixed(d) => d,
        }
    }

    /// `(mean, scale multiplier)` for a unit-variance observation.
    fn unit_density(&self, x: f64) -> (f64, f64) {
        if x.abs() <= self.lambda {
            return (0.0, 1.0);
        }
        let m = match self.inner_location {
            InnerLocation::Identity => x,
            InnerLocation::Soft => x.signum() * (x.abs() - self.lambda),
        };
        (m, self.scale())
    }

    fn unit_loss(&self, x: f64, theta: f64, r: f64) -> f64 {
        let (m, d) = self.unit_density(x);
        0.5 * (d.ln() + 1.0 / d - 1.0) + (m - theta) * (m - theta) / (2.0 * d * r)
    }
}

/// Univariate Gaussian predictive density, `N(mean, scale sigma_f2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateDensity {
    pub mean: f64,
    pub scale: f64,
}

/// The threshold density for a one-dimensional problem.
pub fn threshold_density(rule: &ThresholdRule, problem: &PredictiveProblem, x: f64) -> Result<UnivariateDensity> {
    if problem.n() != 1 {
        return invalid(format!("threshold density is univariate, problem has n = {}", problem.n()));
    }
    let (m, d) = rule.unit_density(x / problem.sigma_p());
    Ok(UnivariateDensity {
        mean: m * problem.sigma_p(),
        scale: d,
    })
}

/// `eta log(1/eta) / r`.
pub fn rate_f(eta: f64, r: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0 && r > 0.0) {
        return invalid("need eta in (0, 1) and r > 0");
    }
    Ok(eta * (1.0 / eta).ln() / r)
}

/// Exact univariate risk of a threshold rule with identity location, at
/// `theta` in past-standard-deviation units.
pub fn threshold_risk_exact(rule: &ThresholdRule, theta: f64, r: f64) -> Result<f64> {
    if rule.inner_location != InnerLocation::Identity {
        return Err(Error::Unsupported("closed form needs the identity inner location".into()));
    }
    let std = Normal::standard();
    let a = -rule.lambda - theta;
    let b = rule.lambda - theta;
    let p_in = std.cdf(b) - std.cdf(a);
    // \int_a^b z^2 phi(z) dz
    let z2_in = p_in - (b * std.pdf(b) - a * std.pdf(a));
    let d = rule.scale();
    let outside = 1.0 - p_in;
    Ok(theta * theta * p_in / (2.0 * r) + 0.5 * (d.ln() + 1.0 / d - 1.0) * outside + (1.0 - z2_in) / (2.0 * d * r))
}

/// Monte Carlo univariate risk at each `theta` of the grid.
pub fn threshold_risk_profile(rule: &ThresholdRule, problem: &PredictiveProblem, theta_grid: &[f64], mc_cfg: &McConfig) -> Result<Vec<(f64, f64, f64)>> {
    if problem.n() != 1 {
        return invalid("risk profile is univariate");
    }
    if theta_grid.iter().any(|t| !t.is_finite()) {
        return invalid("theta grid must be finite");
    }
    let r = problem.r();
    let sp = problem.sigma_p();
    let mut out = Vec::with_capacity(theta_grid.len());
    for (k, &theta) in theta_grid.iter().enumerate() {
        let t = theta / sp;
        let losses = mc::indexed_map(mc_cfg.master_seed ^ ((k as u64) << 32), mc_cfg.replicates, |_, rng| {
            let x = t + rng.sample::<f64, _>(StandardNormal);
            rule.unit_loss(x, t, r)
        });
        let rep = RiskReport::from_samples(&losses, mc_cfg.master_seed, Method::MonteCarlo);
        out.push((theta, rep.estimate, rep.std_error));
    }
    Ok(out)
}

/// Largest two-point-prior Bayes risk `(1-eta) rho(0) + eta rho(mu)` over
/// `mu_grid`, divided by `eta log(1/eta) / r`.
pub fn two_point_bayes_ratio(rule: &ThresholdRule, r: f64, mu_grid: &[f64]) -> Result<(f64, f64)> {
    if mu_grid.is_empty() {
        return invalid("empty mu grid");
    }
    let eta = rule.eta;
    let r0 = threshold_risk_exact(rule, 0.0, r)?;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &mu in mu_grid {
        let v = (1.0 - eta) * r0 + eta * threshold_risk_exact(rule, mu, r)?;
        if v > best.0 {
            best = (v, mu);
        }
    }
    Ok((best.0 / rate_f(eta, r)?, best.1))
}

/// `(1/2) sum_i E log(1 + (theta_hat_i - theta_i)^2 / sigma_f2)`, a lower
/// bound on the risk of any product Gaussian density centered at
/// `theta_hat`.
pub fn product_lower_bound(problem: &PredictiveProblem, theta: &ParamPoint, estimator: &LocationEstimator, mc_cfg: &McConfig) -> Result<RiskReport> {
    problem.check_len(theta.theta(), "theta")?;
    let t = theta.theta();
    let vf = problem.sigma_f2();
    let vals = mc::try_replicate_map(mc_cfg, |_, rng| {
        let x = draw_past(problem, t, rng);
        let est = estimator.estimate(problem, &x)?;
        Ok::<_, Error>(0.5 * est.iter().zip(t).map(|(e, ti)| ((e - ti) * (e - ti) / vf).ln_1p()).sum::<f64>())
    })?;
    Ok(RiskReport::from_samples(&vals, mc_cfg.master_seed, Method::MonteCarlo))
}

/// Coordinatewise estimator that applies a threshold rule's location.
pub fn threshold_estimator(rule: ThresholdRule) -> LocationEstimator {
    LocationEstimator::new(format!("threshold({})", rule.eta), move |p: &PredictiveProblem, x: &[f64]| {
        let sp = p.sigma_p();
        Ok(x.iter().map(|v| rule.unit_density(v / sp).0 * sp).collect())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseMinimaxRecord {
    pub n: usize,
    pub s: usize,
    pub r: f64,
    pub eta: f64,
    /// `s log(n/s) / r`
    pub gaussian_rate: f64,
    /// `s log(n/s) / (1 + r)`
    pub unrestricted_rate: f64,
    pub ratio: f64,
    /// Monte Carlo risk of the product threshold rule at `s` spikes of height
    /// `sqrt(2 log(n/s))`.
    pub empirical: f64,
    pub empirical_se: f64,
    /// Same risk from the univariate closed form.
    pub empirical_exact: f64,
}

impl SparseMinimaxRecord {
    pub fn empirical_ratio(&self) -> f64 {
        self.empirical / self.gaussian_rate
    }
}

pub fn spike_height(n: usize, s: usize) -> f64 {
    (2.0 * (n as f64 / s as f64).ln()).sqrt()
}

pub fn sparse_minimax_estimate(problem: &PredictiveProblem, space: SparseSpace, mc_cfg: &McConfig) -> Result<SparseMinimaxRecord> {
    let n = space.n();
    let s = space.s();
    if problem.n() != n {
        return invalid(format!("problem dimension {} differs from the space dimension {n}", problem.n()));
    }
    if s < 1 || s as f64 / n as f64 > 0.05 {
        return invalid(format!("need s >= 1 and s/n <= 0.05, got s = {s}, n = {n}"));
    }
    let r = problem.r();
    let eta = s as f64 / n as f64;
    let rule = ThresholdRule::new(eta)?;
    let log_ns = (n as f64 / s as f64).ln();
    let h = spike_height(n, s);
    let theta = ParamPoint::spikes(n, h, s)?;
    let t_unit: Vec<f64> = theta.theta().to_vec();
    let losses = mc::replicate_map(mc_cfg, |_, rng| {
        t_unit
            .iter()
            .map(|ti| {
                let x = ti + rng.sample::<f64, _>(StandardNormal);
                rule.unit_loss(x, *ti, r)
            })
            .sum::<f64>()
    });
    let rep = RiskReport::from_samples(&losses, mc_cfg.master_seed, Method::MonteCarlo);
    let exact = s as f64 * threshold_risk_exact(&rule, h, r)? + (n - s) as f64 * threshold_risk_exact(&rule, 0.0, r)?;
    Ok(SparseMinimaxRecord {
        n,
        s,
        r,
        eta,
        gaussian_rate: s as f64 * log_ns / r,
        unrestricted_rate: s as f64 * log_ns / (1.0 + r),
        ratio: 1.0 + 1.0 / r,
        empirical: rep.estimate,
        empirical_se: rep.std_error,
        empirical_exact: exact,
    })
}
