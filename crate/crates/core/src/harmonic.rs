//! The harmonic prior `pi(theta) ∝ ||theta||^{-(n-2)}` and its Bayes rules.
//!
//! The prior is a scale mixture of centered Gaussians. Writing the mixing
//! variance as `t` and `w = 1/(1+t)`, the posterior of `w` given a
//! unit-variance observation `x` with `s = ||x||^2` is a Gamma(`n/2 - 1`,
//! `s/2`) law truncated to `(0, 1]`. Its first two moments drive the
//! posterior mean, the score of the marginal, and the predictive density.
//!
//! Everything in this module works in unit past variance.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Result};
use crate::quad;
use crate::risk_estimates::{MarginalScore, RadialMarginal};
use crate::stats::{dist_sq, dot, mean_se, norm_sq};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// First two posterior moments of the mixing weight `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingMoments {
    pub mean: f64,
    pub second: f64,
}

impl MixingMoments {
    pub fn variance(&self) -> f64 {
        (self.second - self.mean * self.mean).max(0.0)
    }
}

fn shape(n: usize) -> f64 {
    n as f64 / 2.0 - 1.0
}

fn check_dim(n: usize) -> Result<()> {
    if n < 3 {
        return invalid(format!("harmonic prior needs dimension >= 3, got {n}"));
    }
    Ok(())
}

/// Series `d2 = sum_{k>=2} x^{k-2} / prod_{j=1..k}(a+j)`; returns `(S, d1, d2)`
/// with `d1 = 1/(a+1) + x d2` and `S = 1 + x d1`.
fn small_x_series(a: f64, x: f64) -> (f64, f64, f64) {
    let mut t = 1.0 / ((a + 1.0) * (a + 2.0));
    let mut d2 = t;
    let mut k = 2.0;
    loop {
        k += 1.0;
        t *= x / (a + k);
        d2 += t;
        if t <= 1e-17 * d2 {
            break;
        }
    }
    let d1 = 1.0 / (a + 1.0) + x * d2;
    (1.0 + x * d1, d1, d2)
}

/// Posterior moments of `w` for `n >= 3` and `s = ||x||^2`.
pub fn mixing_moments(n: usize, s: f64) -> MixingMoments {
    let a = shape(n);
    let x = 0.5 * s;
    if x <= a + 1.0 {
        let (big_s, d1, d2) = small_x_series(a, x);
        MixingMoments {
            mean: a * d1 / big_s,
            second: a * (a + 1.0) * d2 / big_s,
        }
    } else {
        let inv_s = (a * x.ln() - x - ln_gamma(a + 1.0) - gamma_lr(a, x).ln()).exp();
        MixingMoments {
            mean: a / x * (1.0 - inv_s),
            second: a * (a + 1.0) / (x * x) * (1.0 - inv_s * (1.0 + x / (a + 1.0))),
        }
    }
}

/// `ln \int_0^1 w^{n/2-2} exp(-w s/2) dw`.
pub fn log_mixing_normalizer(n: usize, s: f64) -> f64 {
    let a = shape(n);
    let x = 0.5 * s;
    if x <= a + 1.0 {
        let (big_s, _, _) = small_x_series(a, x);
        -x + big_s.ln() - a.ln()
    } else {
        ln_gamma(a) + gamma_lr(a, x).ln() - a * x.ln()
    }
}

/// Posterior mean under the harmonic prior, unit variance.
pub fn posterior_mean_unit(x: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len())?;
    let m = mixing_moments(x.len(), norm_sq(x));
    Ok(x.iter().map(|v| v * (1.0 - m.mean)).collect())
}

/// The harmonic marginal `m(x) = \int N(x; 0, (1+t) I) dt`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HarmonicPrior;

impl RadialMarginal for HarmonicPrior {
    fn score(&self, x: &[f64]) -> Result<MarginalScore> {
        check_dim(x.len())?;
        let n = x.len();
        let s = norm_sq(x);
        let m = mixing_moments(n, s);
        Ok(MarginalScore {
            grad_log: x.iter().map(|v| -m.mean * v).collect(),
            laplacian_ratio: s * m.second - n as f64 * m.mean,
        })
    }
}

/// Posterior predictive density of the harmonic prior for a future
/// observation with variance `r` (unit past variance).
#[derive(Debug, Clone)]
pub struct HarmonicPredictive {
    x: Vec<f64>,
    s: f64,
    r: f64,
    moments: MixingMoments,
    log_norm: f64,
}

impl HarmonicPredictive {
    pub fn new(x: &[f64], r: f64) -> Result<Self> {
        check_dim(x.len())?;
        if !(r > 0.0) {
            return invalid(format!("variance ratio must be positive, got {r}"));
        }
        let s = norm_sq(x);
        Ok(Self {
            x: x.to_vec(),
            s,
            r,
            moments: mixing_moments(x.len(), s),
            log_norm: log_mixing_normalizer(x.len(), s),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `ln p(y | x) = ln E_{w|x} N(y; (1-w) x, (r+1-w) I)`.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        let n = self.x.len() as f64;
        let yy = norm_sq(y);
        let yx = dot(y, &self.x);
        let s = self.s;
        let r = self.r;
        // w = u^2
        let log_f = |u: f64| {
            let w = u * u;
            let v = r + 1.0 - w;
            let b = 1.0 - w;
            let q = yy - 2.0 * b * yx + b * b * s;
            let jac = if n > 3.0 { (n - 3.0) * u.ln() } else { 0.0 };
            jac + std::f64::consts::LN_2 - 0.5 * w * s
                - 0.5 * n * (LN_2PI + v.ln())
                - q / (2.0 * v)
        };
        let log_f = |u: f64| if u == 0.0 && n > 3.0 { f64::NEG_INFINITY } else { log_f(u) };
        Ok(quad::log_integrate(&log_f, 0.0, 1.0, 1e-10)? - self.log_norm)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.x.iter().map(|v| v * (1.0 - self.moments.mean)).collect()
    }

    /// Moment-matched Gaussian: mean `(1-Ew) x`, covariance
    /// `(r+1-Ew) I + Var(w) x x^T`.
    pub fn moment_match(&self) -> RankOneGaussian {
        RankOneGaussian {
            mean: self.mean(),
            alpha: self.r + 1.0 - self.moments.mean,
            beta: self.moments.variance(),
            dir: self.x.clone(),
            dir_sq: self.s,
        }
    }

    /// KL divergence from `N(theta, r I)` to this density: exact KL to the
    /// moment-matched Gaussian plus a Monte Carlo correction over `samples`
    /// draws. Returns the estimate and its standard error.
    pub fn kl_from<R: Rng + ?Sized>(&self, theta: &[f64], samples: usize, rng: &mut R) -> Result<(f64, f64)> {
        if theta.len() != self.x.len() {
            return invalid("theta length differs from the observation length");
        }
        let g = self.moment_match();
        let base = g.kl_from_isotropic(theta, self.r);
        let sd = self.r.sqrt();
        let mut diffs = Vec::with_capacity(samples);
        let mut y = vec![0.0; theta.len()];
        for _ in 0..samples {
            for (yi, ti) in y.iter_mut().zip(theta) {
                *yi = ti + sd * rng.sample::<f64, _>(StandardNormal);
            }
            diffs.push(g.log_density(&y) - self.log_density(&y)?);
        }
        if samples < 2 {
            return Ok((base + diffs.first().copied().unwrap_or(0.0), f64::NAN));
        }
        let (m, se) = mean_se(&diffs);
        Ok((base + m, se))
    }
}

/// Gaussian with covariance `alpha I + beta d d^T`.
#[derive(Debug, Clone)]
pub struct RankOneGaussian {
    mean: Vec<f64>,
    alpha: f64,
    beta: f64,
    dir: Vec<f64>,
    dir_sq: f64,
}

impl RankOneGaussian {
    fn gamma(&self) -> f64 {
        self.alpha + self.beta * self.dir_sq
    }

    fn log_det(&self) -> f64 {
        let n = self.mean.len() as f64;
        (n - 1.0) * self.alpha.ln() + self.gamma().ln()
    }

    fn quad_form(&self, d: &[f64]) -> f64 {
        let p = dot(d, &self.dir);
        (norm_sq(d) - self.beta * p * p / self.gamma()) / self.alpha
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let d: Vec<f64> = y.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        -0.5 * (n * LN_2PI + self.log_det() + self.quad_form(&d))
    }

    /// `KL(N(theta, r I) || self)`.
    pub fn kl_from_isotropic(&self, theta: &[f64], r: f64) -> f64 {
        let n = theta.len() as f64;
        let d: Vec<f64> = self.mean.iter().zip(theta).map(|(a, b)| a - b).collect();
        let trace = (n - 1.0) / self.alpha + 1.0 / self.gamma();
        0.5 * (r * trace + self.quad_form(&d) - n + self.log_det() - n * r.ln())
    }
}

/// Squared error of the harmonic posterior mean at a unit-variance draw.
pub(crate) fn posterior_mean_loss(x: &[f64], theta: &[f64]) -> Result<f64> {
    Ok(dist_sq(&posterior_mean_unit(x)?, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream_rng;

    /// Moments by direct quadrature over `w` (substituting `w = u^2`).
    fn quad_moments(n: usize, s: f64) -> (f64, f64) {
        let a = shape(n);
        let log_base = |u: f64, k: i32| {
            let w = u * u;
            std::f64::consts::LN_2 + (2.0 * a - 1.0) * u.ln() - 0.5 * w * s + k as f64 * w.ln()
        };
        let z = crate::quad::log_integrate(&|u| log_base(u, 0), 0.0, 1.0, 1e-13).unwrap();
        let m1 = crate::quad::log_integrate(&|u| log_base(u, 1), 0.0, 1.0, 1e-13).unwrap();
        let m2 = crate::quad::log_integrate(&|u| log_base(u, 2), 0.0, 1.0, 1e-13).unwrap();
        let (m1, m2) = ((m1 - z).exp(), (m2 - z).exp());
        (m1, m2)
    }

    #[test]
    fn moments_match_quadrature() {
        for &n in &[3usize, 4, 5, 10, 18, 50] {
            for &s in &[0.0, 0.3, 2.0, 7.9, 8.1, 15.0, 40.0, 100.0] {
                let m = mixing_moments(n, s);
                let (e1, e2) = quad_moments(n, s);
                assert!((m.mean - e1).abs() < 1e-9 * e1.max(1e-3), "n={n} s={s}: {} vs {e1}", m.mean);
                assert!((m.second - e2).abs() < 1e-9 * e2.max(1e-3), "n={n} s={s}: {} vs {e2}", m.second);
            }
        }
    }

    #[test]
    fn moments_at_origin() {
        // truncated Gamma with zero rate: density ∝ w^{a-1} on (0,1]
        let m = mixing_moments(10, 0.0);
        assert!((m.mean - 4.0 / 5.0).abs() < 1e-15);
        assert!((m.second - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn branches_join_continuously() {
        for &n in &[3usize, 10, 200] {
            let a = shape(n);
            let lo = mixing_moments(n, 2.0 * (a + 1.0) * (1.0 - 1e-12));
            let hi = mixing_moments(n, 2.0 * (a + 1.0) * (1.0 + 1e-12));
            assert!((lo.mean - hi.mean).abs() < 1e-10);
            assert!((lo.second - hi.second).abs() < 1e-10);
            let l0 = log_mixing_normalizer(n, 2.0 * (a + 1.0) * (1.0 - 1e-12));
            let l1 = log_mixing_normalizer(n, 2.0 * (a + 1.0) * (1.0 + 1e-12));
            assert!((l0 - l1).abs() < 1e-11 * l0.abs().max(1.0), "n={n} {l0} {l1}");
        }
    }

    #[test]
    fn normalizer_matches_quadrature() {
        for &(n, s) in &[(3usize, 1.0), (7, 30.0), (18, 5.0)] {
            let a = shape(n);
            let z = crate::quad::integrate(
                &|u: f64| 2.0 * u.powf(2.0 * a - 1.0) * (-0.5 * u * u * s).exp(),
                0.0,
                1.0,
                1e-14,
            )
            .unwrap();
            assert!((log_mixing_normalizer(n, s) - z.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn predictive_integrates_to_one_in_one_direction() {
        // radial check: density along a line integrates to the marginal of one
        // coordinate, which must itself be a density
        let x = [1.0, -0.5, 2.0];
        let p = HarmonicPredictive::new(&x, 1.0).unwrap();
        let f = |t: f64| {
            let y = [t, 0.0, 0.0];
            p.log_density(&y).unwrap().exp()
        };
        // \int\int\int p dy = 1; spot-check via a 3-D product rule on a box
        let nodes = crate::quad::gauss_legendre(48, -12.0, 12.0);
        let mut total = 0.0;
        for (a, wa) in &nodes {
            for (b, wb) in &nodes {
                for (c, wc) in &nodes {
                    total += wa * wb * wc * p.log_density(&[*a, *b, *c]).unwrap().exp();
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert!(f(0.0) > 0.0);
    }

    #[test]
    fn kl_of_moment_matched_gaussian_to_itself_is_zero() {
        let p = HarmonicPredictive::new(&[0.3, 1.2, -0.7, 2.0], 0.5).unwrap();
        let g = p.moment_match();
        // KL(N(m, a I) || N(m, a I + b d d^T)) with beta = 0 reduces to zero
        let flat = RankOneGaussian { beta: 0.0, ..g.clone() };
        assert!(flat.kl_from_isotropic(&flat.mean.clone(), flat.alpha).abs() < 1e-12);
    }

    #[test]
    fn control_variate_kl_is_finite_and_positive() {
        let x = [0.5, 1.0, -1.5, 0.2, 0.9];
        let p = HarmonicPredictive::new(&x, 1.0).unwrap();
        let mut rng = stream_rng(5, 0);
        let (kl, se) = p.kl_from(&[0.0; 5], 4000, &mut rng).unwrap();
        assert!(kl > 0.0 && se < 0.01 * kl, "{kl} {se}");
    }
}
