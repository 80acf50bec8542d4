//! Domain types shared by every module.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mc;

/// Dimension and the past/future noise levels of the orthogonal Gaussian
/// predictive model `X ~ N(theta, sigma_p2 I)`, `Y ~ N(theta, sigma_f2 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveProblem {
    n: usize,
    sigma_p2: f64,
    sigma_f2: f64,
    r: f64,
}

pub fn make_problem(n: usize, sigma_p2: f64, sigma_f2: f64) -> Result<PredictiveProblem> {
    if n < 1 {
        return invalid("dimension must be at least 1");
    }
    if !(sigma_p2 > 0.0 && sigma_p2.is_finite()) {
        return invalid(format!("past variance must be positive, got {sigma_p2}"));
    }
    if !(sigma_f2 > 0.0 && sigma_f2.is_finite()) {
        return invalid(format!("future variance must be positive, got {sigma_f2}"));
    }
    Ok(PredictiveProblem {
        n,
        sigma_p2,
        sigma_f2,
        r: sigma_f2 / sigma_p2,
    })
}

impl PredictiveProblem {
    /// Problem with unit past variance and future variance `r`.
    pub fn normalized(n: usize, r: f64) -> Result<Self> {
        make_problem(n, 1.0, r)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma_p2(&self) -> f64 {
        self.sigma_p2
    }

    pub fn sigma_f2(&self) -> f64 {
        self.sigma_f2
    }

    /// Future-to-past variance ratio.
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p2.sqrt()
    }

    /// Same variance ratio at a different dimension.
    pub fn with_dimension(&self, n: usize) -> Result<Self> {
        make_problem(n, self.sigma_p2, self.sigma_f2)
    }

    pub(crate) fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.n {
            return invalid(format!(
                "{what} has length {}, expected dimension {}",
                v.len(),
                self.n
            ));
        }
        Ok(())
    }

    /// Divides by `sigma_p` so that the past variance becomes one.
    pub(crate) fn unit_coords(&self, v: &[f64]) -> Vec<f64> {
        let s = self.sigma_p();
        v.iter().map(|x| x / s).collect()
    }

    pub(crate) fn raw_coords(&self, v: Vec<f64>) -> Vec<f64> {
        let s = self.sigma_p();
        v.into_iter().map(|x| x * s).collect()
    }
}

/// Scale of a Gaussian density estimate, in units of the future variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scale {
    Single(f64),
    Diagonal(Vec<f64>),
}

impl Scale {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Scale::Single(c) => *c,
            Scale::Diagonal(d) => d[i],
        }
    }
}

/// `g[mean, scale]`: a Gaussian with covariance `scale * sigma_f2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictiveDensity {
    mean: Vec<f64>,
    scale: Scale,
}

impl GaussianPredictiveDensity {
    pub fn new(mean: Vec<f64>, scale: Scale) -> Result<Self> {
        match &scale {
            Scale::Single(c) => {
                if !(*c > 0.0 && c.is_finite()) {
                    return invalid(format!("scale must be positive, got {c}"));
                }
            }
            Scale::Diagonal(d) => {
                if d.len() != mean.len() {
                    return invalid("diagonal scale length differs from mean length");
                }
                if let Some(c) = d.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
                    return invalid(format!("scale entries must be positive, got {c}"));
                }
            }
        }
        Ok(Self { mean, scale })
    }

    pub fn single(mean: Vec<f64>, c: f64) -> Result<Self> {
        Self::new(mean, Scale::Single(c))
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &Scale {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, problem: &PredictiveProblem, y: &[f64]) -> Result<f64> {
        problem.check_len(y, "evaluation point")?;
        problem.check_len(&self.mean, "density mean")?;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut acc = 0.0;
        for (i, (yi, mi)) in y.iter().zip(&self.mean).enumerate() {
            let v = self.scale.at(i) * problem.sigma_f2();
            let d = yi - mi;
            acc -= 0.5 * (ln_2pi + v.ln()) + d * d / (2.0 * v);
        }
        Ok(acc)
    }
}

/// A location parameter `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    theta: Vec<f64>,
}

impl ParamPoint {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return invalid("parameter vector is empty");
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return invalid("parameter vector has non-finite entries");
        }
        Ok(Self { theta })
    }

    pub fn zero(n: usize) -> Self {
        Self { theta: vec![0.0; n] }
    }

    /// All coordinates equal to `sqrt(a)`, so that `a_n() == a`.
    pub fn radial(n: usize, a: f64) -> Result<Self> {
        if !(a >= 0.0) {
            return invalid(format!("signal strength must be nonnegative, got {a}"));
        }
        Ok(Self {
            theta: vec![a.sqrt(); n],
        })
    }

    /// `k` coordinates at height `h`, the rest zero.
    pub fn spikes(n: usize, h: f64, k: usize) -> Result<Self> {
        if k > n {
            return invalid(format!("{k} spikes do not fit in dimension {n}"));
        }
        let mut theta = vec![0.0; n];
        theta[..k].iter_mut().for_each(|t| *t = h);
        Self::new(theta)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Mean squared signal `||theta||^2 / n`.
    pub fn a_n(&self) -> f64 {
        crate::stats::norm_sq(&self.theta) / self.theta.len() as f64
    }
}

/// Monte Carlo configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub replicates: usize,
    pub master_seed: u64,
    pub inner_samples: usize,
}

impl McConfig {
    pub fn new(replicates: usize, master_seed: u64) -> Result<Self> {
        Self::with_inner(replicates, master_seed, 1)
    }

    pub fn with_inner(replicates: usize, master_seed: u64, inner_samples: usize) -> Result<Self> {
        if replicates < 2 {
            return invalid("at least two replicates are needed for a standard error");
        }
        if inner_samples < 1 {
            return invalid("inner sample count must be positive");
        }
        Ok(Self {
            replicates,
            master_seed,
            inner_samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    MonteCarlo,
    Quadrature,
}

/// Point estimate with its standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub seed: u64,
    pub method: Method,
}

impl RiskReport {
    pub fn closed_form(estimate: f64) -> Self {
        Self {
            estimate,
            std_error: 0.0,
            replicates: 0,
            seed: 0,
            method: Method::ClosedForm,
        }
    }

    pub(crate) fn from_samples(samples: &[f64], seed: u64, method: Method) -> Self {
        let (estimate, std_error) = crate::stats::mean_se(samples);
        Self {
            estimate,
            std_error,
            replicates: samples.len(),
            seed,
            method,
        }
    }

    /// `|estimate - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.std_error
    }
}

/// Draws `X ~ N(theta, sigma_p2 I)`.
pub fn sample_past(problem: &PredictiveProblem, theta: &ParamPoint, seed: u64) -> Result<Vec<f64>> {
    problem.check_len(theta.theta(), "theta")?;
    let mut rng = mc::stream_rng(seed, 0);
    Ok(draw_past(problem, theta.theta(), &mut rng))
}

pub(crate) fn draw_past<R: Rng + ?Sized>(
    problem: &PredictiveProblem,
    theta: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let s = problem.sigma_p();
    theta
        .iter()
        .map(|t| t + s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_is_exact() {
        assert_eq!(make_problem(18, 1.0, 1.0).unwrap().r(), 1.0);
        assert_eq!(make_problem(10, 1.0, 0.1).unwrap().r(), 0.1 / 1.0);
        assert_eq!(make_problem(5, 2.0, 1.0).unwrap().r(), 0.5);
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(make_problem(0, 1.0, 1.0).is_err());
        assert!(make_problem(3, 0.0, 1.0).is_err());
        assert!(make_problem(3, 1.0, -2.0).is_err());
        assert!(make_problem(3, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = make_problem(7, 2.0, 1.0).unwrap();
        let t = ParamPoint::radial(7, 3.0).unwrap();
        assert_eq!(sample_past(&p, &t, 9).unwrap(), sample_past(&p, &t, 9).unwrap());
        assert_ne!(sample_past(&p, &t, 9).unwrap(), sample_past(&p, &t, 10).unwrap());
    }

    #[test]
    fn sampling_rejects_length_mismatch() {
        let p = make_problem(4, 1.0, 1.0).unwrap();
        assert!(sample_past(&p, &ParamPoint::zero(3), 1).is_err());
    }

    #[test]
    fn chi_square_mean_at_origin() {
        let n = 8;
        let p = make_problem(n, 1.0, 1.0).unwrap();
        let t = ParamPoint::zero(n);
        let vals: Vec<f64> = (0..100_000u64)
            .map(|s| crate::stats::norm_sq(&sample_past(&p, &t, s).unwrap()) / n as f64)
            .collect();
        let (m, se) = crate::stats::mean_se(&vals);
        assert!((m - 1.0).abs() <= 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn coordinate_means_at_five() {
        let n = 4;
        let p = make_problem(n, 1.0, 1.0).unwrap();
        let t = ParamPoint::new(vec![5.0; n]).unwrap();
        let draws: Vec<Vec<f64>> = (0..20_000u64).map(|s| sample_past(&p, &t, s).unwrap()).collect();
        for i in 0..n {
            let col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let (m, se) = crate::stats::mean_se(&col);
            assert!((m - 5.0).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn scale_validation() {
        assert!(GaussianPredictiveDensity::single(vec![0.0], 0.0).is_err());
        assert!(GaussianPredictiveDensity::new(vec![0.0, 1.0], Scale::Diagonal(vec![1.0])).is_err());
        assert!(GaussianPredictiveDensity::new(vec![0.0], Scale::Diagonal(vec![-1.0])).is_err());
    }

    #[test]
    fn param_point_a_n() {
        assert_eq!(ParamPoint::zero(5).a_n(), 0.0);
        let t = ParamPoint::radial(10, 2.5).unwrap();
        assert!((t.a_n() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn report_closed_form_has_zero_se() {
        let r = RiskReport::closed_form(1.5);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.method, Method::ClosedForm);
    }
}
