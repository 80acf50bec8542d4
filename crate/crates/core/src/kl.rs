//! Kullback-Leibler losses and predictive risks.
//!
//! Gaussian strategies have a closed-form loss for each past draw, so their
//! risk is a single Monte Carlo average over the past. Mixtures and the
//! harmonic posterior predictive need an inner average over the future.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::LocationEstimator;
use crate::harmonic::{self, HarmonicPredictive};
use crate::mc;
use crate::model::{draw_past, GaussianPredictiveDensity, McConfig, Method, ParamPoint, PredictiveProblem, RiskReport, Scale};
use crate::quad;
use crate::risk_estimates::{flattening, FlattenSource};
use crate::stats::{self, dist_sq, mean, mean_se, sd};

/// A predictive density produced by a strategy from one past draw.
#[derive(Debug, Clone)]
pub enum PredictiveDensity {
    Gaussian(GaussianPredictiveDensity),
    /// Weighted Gaussian components; weights sum to one.
    Mixture(Vec<(f64, GaussianPredictiveDensity)>),
    /// Harmonic posterior predictive, stored in unit past variance.
    Harmonic(HarmonicPredictive),
}

/// Maps a past draw to a predictive density.
pub type Strategy<'a> = dyn Fn(&PredictiveProblem, &[f64]) -> Result<PredictiveDensity> + Sync + 'a;

/// How the scale of `g[theta_hat, c]` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    Fixed(f64),
    /// `1 + u_hat / (n sigma_f2)` from the estimator's companion risk
    /// estimate, which must be nonnegative.
    RiskEstimate,
    /// `1 + q / (n sigma_f2)` for a supplied quadratic risk `q`.
    Ideal(f64),
}

pub fn gaussian_strategy(estimator: LocationEstimator, rule: ScaleRule) -> impl Fn(&PredictiveProblem, &[f64]) -> Result<PredictiveDensity> + Sync {
    move |p, x| {
        let mean = estimator.estimate(p, x)?;
        let c = match rule {
            ScaleRule::Fixed(c) => c,
            ScaleRule::RiskEstimate => flattening(p, estimator.risk_estimate(p, x)?, FlattenSource::SurePlus)?.value,
            ScaleRule::Ideal(q) => flattening(p, q, FlattenSource::OracleIf)?.value,
        };
        Ok(PredictiveDensity::Gaussian(GaussianPredictiveDensity::single(mean, c)?))
    }
}

pub fn harmonic_strategy() -> impl Fn(&PredictiveProblem, &[f64]) -> Result<PredictiveDensity> + Sync {
    |p, x| Ok(PredictiveDensity::Harmonic(HarmonicPredictive::new(&p.unit_coords(x), p.r())?))
}

/// Pointwise mixture of Gaussian strategies.
pub fn mixture_strategy<'a>(components: Vec<(f64, Box<Strategy<'a>>)>) -> Result<impl Fn(&PredictiveProblem, &[f64]) -> Result<PredictiveDensity> + Sync + 'a> {
    check_weights(components.iter().map(|(w, _)| *w))?;
    Ok(move |p: &PredictiveProblem, x: &[f64]| {
        let mut parts = Vec::with_capacity(components.len());
        for (w, s) in &components {
            match s(p, x)? {
                PredictiveDensity::Gaussian(g) => parts.push((*w, g)),
                PredictiveDensity::Mixture(m) => parts.extend(m.into_iter().map(|(v, g)| (w * v, g))),
                PredictiveDensity::Harmonic(_) => {
                    return invalid("mixtures of harmonic predictives are not supported");
                }
            }
        }
        Ok(PredictiveDensity::Mixture(parts))
    })
}

fn check_weights(ws: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for w in ws {
        if !(w >= 0.0) {
            return invalid(format!("mixture weight {w} is negative"));
        }
        total += w;
        count += 1;
    }
    if count == 0 || (total - 1.0).abs() > 1e-12 {
        return invalid(format!("mixture weights sum to {total}, not 1"));
    }
    Ok(())
}

/// `(n/2)(log c + 1/c - 1) + ||mu - theta||^2 / (2 c sigma_f2)`, summed per
/// coordinate for diagonal scales.
pub fn kl_loss_gaussian(problem: &PredictiveProblem, theta: &ParamPoint, g: &GaussianPredictiveDensity) -> Result<f64> {
    problem.check_len(theta.theta(), "theta")?;
    problem.check_len(g.mean(), "density mean")?;
    Ok(gaussian_loss(problem, theta.theta(), g.mean(), g.scale()))
}

fn gaussian_loss(problem: &PredictiveProblem, theta: &[f64], mean: &[f64], scale: &Scale) -> f64 {
    match scale {
        Scale::Single(c) => {
            let n = theta.len() as f64;
            0.5 * n * (c.ln() + 1.0 / c - 1.0) + dist_sq(mean, theta) / (2.0 * c * problem.sigma_f2())
        }
        Scale::Diagonal(d) => theta
            .iter()
            .zip(mean)
            .zip(d)
            .map(|((t, m), c)| 0.5 * (c.ln() + 1.0 / c - 1.0) + (m - t) * (m - t) / (2.0 * c * problem.sigma_f2()))
            .sum(),
    }
}

fn draw_future(problem: &PredictiveProblem, theta: &[f64], rng: &mut ChaCha8Rng, y: &mut [f64]) {
    let s = problem.sigma_f2().sqrt();
    for (yi, t) in y.iter_mut().zip(theta) {
        *yi = t + s * rng.sample::<f64, _>(StandardNormal);
    }
}

fn true_log_density(problem: &PredictiveProblem, theta: &[f64], y: &[f64]) -> f64 {
    let v = problem.sigma_f2();
    let n = theta.len() as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + v.ln()) - dist_sq(y, theta) / (2.0 * v)
}

/// Monte Carlo estimate of `E_Y[log p_theta(Y) - logdensity(Y)]`,
/// `Y ~ N(theta, sigma_f2 I)`.
pub fn kl_loss_generic(
    problem: &PredictiveProblem,
    theta: &ParamPoint,
    logdensity: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    mc_cfg: &McConfig,
) -> Result<RiskReport> {
    problem.check_len(theta.theta(), "theta")?;
    let t = theta.theta();
    let diffs = mc::try_replicate_map(mc_cfg, |i, rng| {
        let mut y = vec![0.0; t.len()];
        draw_future(problem, t, rng, &mut y);
        let d = true_log_density(problem, t, &y) - logdensity(&y)?;
        if !d.is_finite() {
            return Err(Error::Numerical(format!("non-finite log-density ratio at replicate {i}")));
        }
        Ok(d)
    })?;
    Ok(RiskReport::from_samples(&diffs, mc_cfg.master_seed, Method::MonteCarlo))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Loss of one predictive density at `theta`; exact for Gaussians and a
/// `samples`-draw Monte Carlo average otherwise.
pub fn density_loss(problem: &PredictiveProblem, theta: &[f64], density: &PredictiveDensity, samples: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    match density {
        PredictiveDensity::Gaussian(g) => Ok(gaussian_loss(problem, theta, g.mean(), g.scale())),
        PredictiveDensity::Mixture(parts) => {
            if parts.len() == 1 {
                let g = &parts[0].1;
                return Ok(gaussian_loss(problem, theta, g.mean(), g.scale()));
            }
            let mut y = vec![0.0; theta.len()];
            let mut terms = vec![0.0; parts.len()];
            let mut acc = stats::CompensatedSum::default();
            for _ in 0..samples {
                draw_future(problem, theta, rng, &mut y);
                for (t, (w, g)) in terms.iter_mut().zip(parts) {
                    *t = w.ln() + g.log_density(problem, &y)?;
                }
                acc.add(true_log_density(problem, theta, &y) - log_sum_exp(&terms));
            }
            Ok(acc.value() / samples as f64)
        }
        PredictiveDensity::Harmonic(h) => {
            let t = problem.unit_coords(theta);
            Ok(h.kl_from(&t, samples, rng)?.0)
        }
    }
}

/// Risk of a strategy: outer average over past draws of its loss.
pub fn predictive_risk_mc(problem: &PredictiveProblem, theta: &ParamPoint, strategy: &Strategy<'_>, mc_cfg: &McConfig) -> Result<RiskReport> {
    problem.check_len(theta.theta(), "theta")?;
    let t = theta.theta();
    let losses = mc::try_replicate_map(mc_cfg, |_, rng| {
        let x = draw_past(problem, t, rng);
        let d = strategy(problem, &x)?;
        density_loss(problem, t, &d, mc_cfg.inner_samples, rng)
    })?;
    Ok(RiskReport::from_samples(&losses, mc_cfg.master_seed, Method::MonteCarlo))
}

/// Risk of the mixture `sum w g_w(. | x)`.
pub fn mixture_strategy_risk(problem: &PredictiveProblem, theta: &ParamPoint, components: Vec<(f64, Box<Strategy<'_>>)>, mc_cfg: &McConfig) -> Result<RiskReport> {
    let s = mixture_strategy(components)?;
    predictive_risk_mc(problem, theta, &s, mc_cfg)
}

/// `(n/2) log(1 + 1/r)`, the constant risk of `g[x, (1+r)/r]`.
pub fn risk_best_invariant(problem: &PredictiveProblem) -> f64 {
    0.5 * problem.n() as f64 * (1.0 / problem.r()).ln_1p()
}

/// `(n/2) log(1 + a / (r (1 + a)))`.
pub fn risk_ideal_linear(problem: &PredictiveProblem, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return invalid(format!("signal strength must be nonnegative, got {a}"));
    }
    let frac = if a.is_infinite() { 1.0 } else { a / (1.0 + a) };
    Ok(0.5 * problem.n() as f64 * (frac / problem.r()).ln_1p())
}

/// Large-dimension risks of three Gaussian strategies around James-Stein.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsAsymptotics {
    /// `g[theta_js, 1]`
    pub plug_in: f64,
    /// `g[theta_js, (1+r)/r]`
    pub fixed_scale: f64,
    /// `g[theta_js, 1 + U/(nr)]`
    pub flattened: f64,
}

pub fn risk_asymptotics_js(problem: &PredictiveProblem, a: f64) -> Result<JsAsymptotics> {
    if !(a > 0.0) {
        return invalid(format!("signal strength must be positive, got {a}"));
    }
    let n = problem.n() as f64;
    let r = problem.r();
    Ok(JsAsymptotics {
        plug_in: n * a / (2.0 * r * (1.0 + a)),
        fixed_scale: 0.5 * n * ((1.0 / r).ln_1p() - 1.0 / ((1.0 + a) * (1.0 + r))),
        flattened: risk_ideal_linear(problem, a)?,
    })
}

/// Per-coordinate gains over `g[x, (1+r)/r]`: from shrinking the location
/// at fixed scale, and then from flattening the scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementSplit {
    pub alpha: f64,
    pub location: f64,
    pub scale: f64,
}

pub fn improvement_split(a: f64, r: f64) -> Result<ImprovementSplit> {
    if !(a >= 0.0 && r > 0.0) {
        return invalid("need a >= 0 and r > 0");
    }
    let alpha = 1.0 / ((1.0 + a) * (1.0 + r));
    Ok(ImprovementSplit {
        alpha,
        location: 0.5 * alpha,
        scale: 0.5 * (-(-alpha).ln_1p() - alpha),
    })
}

/// Scale choice for [`risk_decomposition_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlattenRule {
    /// The estimator's companion risk estimate (must be nonnegative).
    RiskEstimate,
    /// The ideal coefficient computed from the Monte Carlo quadratic risk.
    OracleIf,
    Fixed(f64),
}

/// Risk of `g[theta_hat, c_hat]` split into `(n/2) log IF` and the
/// distortion terms bounding its deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub log_if_term: f64,
    pub distortion_a: f64,
    pub distortion_b: f64,
    pub distortion_l: f64,
    pub ideal_flattening: f64,
    pub mean_flattening: f64,
    pub quadratic_risk: RiskReport,
    pub risk: RiskReport,
    /// `(n/2) E log(1 + ||theta_hat - theta||^2 / (n sigma_f2))`
    pub lower_bound: RiskReport,
    /// Standard error of `risk - log_if_term`, propagating the error of the
    /// quadratic risk.
    pub excess_se: f64,
    pub n: usize,
}

impl RiskDecomposition {
    pub fn excess(&self) -> f64 {
        self.risk.estimate - self.log_if_term
    }

    pub fn upper_bracket(&self) -> f64 {
        self.log_if_term + 0.5 * self.n as f64 * (self.distortion_a + self.distortion_b)
    }

    pub fn lower_bracket(&self) -> f64 {
        self.log_if_term - 0.5 * self.n as f64 * self.distortion_l
    }
}

struct DecompSample {
    loss: f64,
    u: f64,
}

pub fn risk_decomposition_mc(
    problem: &PredictiveProblem,
    theta: &ParamPoint,
    estimator: &LocationEstimator,
    rule: FlattenRule,
    mc_cfg: &McConfig,
) -> Result<RiskDecomposition> {
    problem.check_len(theta.theta(), "theta")?;
    if rule == FlattenRule::RiskEstimate && !estimator.has_risk_estimator() {
        return invalid(format!("estimator {} has no risk estimate to flatten with", estimator.name()));
    }
    if let FlattenRule::Fixed(c) = rule {
        if !(c > 0.0) {
            return invalid(format!("fixed scale must be positive, got {c}"));
        }
    }
    let t = theta.theta();
    let sp2 = problem.sigma_p2();
    let samples = mc::try_replicate_map(mc_cfg, |i, rng| {
        let x = draw_past(problem, t, rng);
        let est = estimator.estimate(problem, &x)?;
        let loss = dist_sq(&est, t) / sp2;
        let u = if rule == FlattenRule::RiskEstimate {
            let u = estimator.risk_estimate(problem, &x)? / sp2;
            if u < 0.0 {
                return Err(Error::Validation(format!(
                    "negative risk estimate {u} at replicate {i}; flattening needs a nonnegative estimate"
                )));
            }
            u
        } else {
            0.0
        };
        Ok(DecompSample { loss, u })
    })?;

    let n = problem.n() as f64;
    let r = problem.r();
    let nr = n * r;
    let losses: Vec<f64> = samples.iter().map(|s| s.loss).collect();
    let (q, q_se) = mean_se(&losses);
    let ideal = 1.0 + q / nr;
    let scales: Vec<f64> = match rule {
        FlattenRule::RiskEstimate => samples.iter().map(|s| 1.0 + s.u / nr).collect(),
        FlattenRule::OracleIf => vec![ideal; samples.len()],
        FlattenRule::Fixed(c) => vec![c; samples.len()],
    };
    let kl: Vec<f64> = losses
        .iter()
        .zip(&scales)
        .map(|(l, c)| 0.5 * n * (c.ln() + (1.0 + l / nr) / c - 1.0))
        .collect();
    let inv: Vec<f64> = scales.iter().map(|c| 1.0 / c).collect();
    let e_c = mean(&scales);
    let sd_c = sd(&scales);
    let sd_inv = sd(&inv);
    let per_coord: Vec<f64> = losses.iter().map(|l| l / n).collect();
    let a_term = ideal / e_c * sd_c * sd_inv + sd(&per_coord) * sd_inv / r;
    let bias = e_c - ideal;
    let b_term = bias * bias / (ideal * e_c);
    let recip: Vec<f64> = losses.iter().map(|l| 1.0 / (1.0 + l / nr)).collect();
    let l_term = sd(&losses) * sd(&recip) / nr;
    let lower: Vec<f64> = losses.iter().map(|l| 0.5 * n * (l / nr).ln_1p()).collect();
    let paired: Vec<f64> = kl.iter().zip(&losses).map(|(k, l)| k - l / (2.0 * r * ideal)).collect();
    let seed = mc_cfg.master_seed;
    Ok(RiskDecomposition {
        log_if_term: 0.5 * n * (q / nr).ln_1p(),
        distortion_a: a_term,
        distortion_b: b_term,
        distortion_l: l_term,
        ideal_flattening: ideal,
        mean_flattening: e_c,
        quadratic_risk: RiskReport {
            estimate: q,
            std_error: q_se,
            replicates: losses.len(),
            seed,
            method: Method::MonteCarlo,
        },
        risk: RiskReport::from_samples(&kl, seed, Method::MonteCarlo),
        lower_bound: RiskReport::from_samples(&lower, seed, Method::MonteCarlo),
        excess_se: mean_se(&paired).1,
        n: problem.n(),
    })
}

/// Quadratic risk `E ||theta_hat - theta||^2` in the problem's units.
pub fn quadratic_risk_mc(problem: &PredictiveProblem, theta: &ParamPoint, estimator: &LocationEstimator, mc_cfg: &McConfig) -> Result<RiskReport> {
    problem.check_len(theta.theta(), "theta")?;
    let t = theta.theta();
    let losses = mc::try_replicate_map(mc_cfg, |_, rng| {
        let x = draw_past(problem, t, rng);
        Ok::<_, Error>(dist_sq(&estimator.estimate(problem, &x)?, t))
    })?;
    Ok(RiskReport::from_samples(&losses, mc_cfg.master_seed, Method::MonteCarlo))
}

/// Rescaling of the parameter inside the harmonic risk integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicScaling {
    /// `theta / sqrt(v)`
    #[default]
    SqrtV,
    /// `theta / v`
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicRisk {
    pub risk: RiskReport,
    /// `C min_k q(beta_k)` over the quadrature nodes, `C = log(1 + 1/r) / 2`.
    pub bracket_low: f64,
    pub bracket_high: f64,
    /// `(v, q, se)` at each node.
    pub nodes: Vec<(f64, f64, f64)>,
}

impl HarmonicRisk {
    pub fn bracket_contains(&self, value: f64) -> bool {
        let tol = 1e-12 * self.bracket_high.abs().max(1.0);
        value >= self.bracket_low - tol && value <= self.bracket_high + tol
    }
}

pub const HARMONIC_NODES: usize = 64;

/// Risk of the harmonic posterior predictive as
/// `(1/2) \int_{r/(1+r)}^1 v^{-1} q(theta/sqrt(v)) dv`, with `q` the
/// quadratic risk of the harmonic posterior mean. Every node reuses the same
/// noise draws.
pub fn risk_harmonic_bayes(problem: &PredictiveProblem, theta: &ParamPoint, scaling: HarmonicScaling, mc_cfg: &McConfig) -> Result<HarmonicRisk> {
    problem.check_len(theta.theta(), "theta")?;
    if problem.n() < 3 {
        return invalid("harmonic risk needs dimension >= 3");
    }
    let r = problem.r();
    let lo = r / (1.0 + r);
    let nodes = quad::gauss_legendre(HARMONIC_NODES, lo, 1.0);
    let t = problem.unit_coords(theta.theta());
    let betas: Vec<Vec<f64>> = nodes
        .iter()
        .map(|(v, _)| {
            let k = match scaling {
                HarmonicScaling::SqrtV => 1.0 / v.sqrt(),
                HarmonicScaling::Literal => 1.0 / v,
            };
            t.iter().map(|x| k * x).collect()
        })
        .collect();
    let per_rep = mc::try_replicate_map(mc_cfg, |_, rng| {
        let z: Vec<f64> = (0..t.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut qs = Vec::with_capacity(nodes.len());
        let mut integral = 0.0;
        for ((v, w), beta) in nodes.iter().zip(&betas) {
            let x: Vec<f64> = beta.iter().zip(&z).map(|(b, e)| b + e).collect();
            let q = harmonic::posterior_mean_loss(&x, beta)?;
            integral += 0.5 * w / v * q;
            qs.push(q);
        }
        Ok::<_, Error>((integral, qs))
    })?;
    let integrals: Vec<f64> = per_rep.iter().map(|(i, _)| *i).collect();
    let mut node_stats = Vec::with_capacity(nodes.len());
    for (k, (v, _)) in nodes.iter().enumerate() {
        let col: Vec<f64> = per_rep.iter().map(|(_, q)| q[k]).collect();
        let (m, se) = mean_se(&col);
        node_stats.push((*v, m, se));
    }
    let c = 0.5 * (1.0 / r).ln_1p();
    let qmin = node_stats.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let qmax = node_stats.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut risk = RiskReport::from_samples(&integrals, mc_cfg.master_seed, Method::Quadrature);
    risk.replicates = integrals.len();
    Ok(HarmonicRisk {
        risk,
        bracket_low: c * qmin,
        bracket_high: c * qmax,
        nodes: node_stats,
    })
}
