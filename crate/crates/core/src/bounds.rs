//! Dimension-dependent constants, oracle bounds, and numerical checks of
//! the auxiliary inequalities on inverse noncentral chi-square moments,
//! reciprocal variances, and positive parts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{invalid, Result};
use crate::mc;
use crate::model::McConfig;
use crate::quad;
use crate::rasl::Verdict;
use crate::stats::{fit_line, mean_se, variance_se};

/// Constants of the James-Stein deviation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub n: usize,
    pub a_n: f64,
    pub b_n: f64,
    pub l_n: f64,
    pub e_n: f64,
    pub f_n: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

fn floor_check(n: usize, min: usize, name: &str) -> Result<()> {
    if n < min {
        return invalid(format!("{name} is defined for n >= {min}, got n = {n}"));
    }
    Ok(())
}

/// `3 (1 - 2/n)^-2 (1 - 4/n)^-1`, for `n >= 5`.
pub fn k1(n: usize) -> Result<f64> {
    floor_check(n, 5, "k1")?;
    let n = n as f64;
    Ok(3.0 / ((1.0 - 2.0 / n).powi(2) * (1.0 - 4.0 / n)))
}

/// `sqrt(3) {prod_{i=1..4} (1 - (2i+1)/n)}^{-1/2}`, for `n >= 10`.
pub fn e_n(n: usize) -> Result<f64> {
    floor_check(n, 10, "e_n")?;
    let n = n as f64;
    let prod: f64 = (1..=4).map(|i| 1.0 - (2 * i + 1) as f64 / n).product();
    Ok(3f64.sqrt() / prod.sqrt())
}

/// `(1 - (log n / n)^{1/2})^-2`, for `n >= 10`.
pub fn f_n(n: usize) -> Result<f64> {
    floor_check(n, 10, "f_n")?;
    let n = n as f64;
    Ok((1.0 - (n.ln() / n).sqrt()).powi(-2))
}

/// `max(e_n, f_n)`, for `n >= 10`.
pub fn k2(n: usize) -> Result<f64> {
    floor_check(n, 10, "k2")?;
    Ok(e_n(n)?.max(f_n(n)?))
}

/// `(sqrt 2 + 5 n^{-1/2}) / (1 - 2/n)`, for `n >= 3`.
pub fn k3(n: usize) -> Result<f64> {
    floor_check(n, 3, "k3")?;
    let n = n as f64;
    Ok((2f64.sqrt() + 5.0 / n.sqrt()) / (1.0 - 2.0 / n))
}

pub fn constants(n: usize) -> Result<BoundConstants> {
    let k2v = k2(n)?;
    let nf = n as f64;
    let a_n = 3.0 * (1.0 - 1.0 / (nf - 2.0)).powi(-2);
    Ok(BoundConstants {
        n,
        a_n,
        b_n: 4.0 * (2.0 + a_n + k2v),
        l_n: 3.0 * (1.0 - 2.0 / nf).powi(-2),
        e_n: e_n(n)?,
        f_n: f_n(n)?,
        k1: k1(n)?,
        k2: k2v,
        k3: k3(n)?,
    })
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("r must be positive and finite, got {r}"));
    }
    Ok(())
}

/// `(sqrt(a b) r^{-3/2} + (a + b + l) r^{-2} + a r^{-3}) / 2`.
pub fn theorem2_deviation_bound(n: usize, r: f64) -> Result<f64> {
    check_r(r)?;
    let c = constants(n)?;
    Ok(0.5 * ((c.a_n * c.b_n).sqrt() * r.powf(-1.5) + (c.a_n + c.b_n + c.l_n) * r.powi(-2) + c.a_n * r.powi(-3)))
}

/// Same as [`theorem2_deviation_bound`] without `l`; bounds the distance of
/// the risk from `(n/2) log IF` in either direction.
pub fn theorem2_approximation_bound(n: usize, r: f64) -> Result<f64> {
    check_r(r)?;
    let c = constants(n)?;
    Ok(0.5 * ((c.a_n * c.b_n).sqrt() * r.powf(-1.5) + (c.a_n + c.b_n) * r.powi(-2) + c.a_n * r.powi(-3)))
}

/// `5.3 r^{-3/2} + 19.6 r^{-2} + 1.7 r^{-3}`.
pub fn dimension_free_envelope(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(5.3 * r.powf(-1.5) + 19.6 * r.powi(-2) + 1.7 * r.powi(-3))
}

/// `0.1 r^-1 + 5.3 r^{-3/2} + 18.1 r^-2 + 1.7 r^-3`.
pub fn oracle_bound_paper(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(0.1 / r + 5.3 * r.powf(-1.5) + 18.1 * r.powi(-2) + 1.7 * r.powi(-3))
}

/// `2 r^-1 + 5 r^-2 + 4 r^-3`.
pub fn oracle_bound_xu(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(2.0 / r + 5.0 * r.powi(-2) + 4.0 * r.powi(-3))
}

/// Ratio of the best Gaussian to the unrestricted sparse minimax rate,
/// `1 + 1/r`.
pub fn suboptimality_factor(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(1.0 + 1.0 / r)
}

/// `ln` of the Poisson(`mu`) mass at `k`.
fn ln_poisson(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mu.ln() - mu - ln_gamma(k as f64 + 1.0)
}

/// Index range carrying all but a negligible share of Poisson(`mu`) mass.
fn poisson_range(mu: f64) -> (u64, u64) {
    let sd = mu.sqrt();
    let lo = (mu - 12.0 * sd - 10.0).max(0.0) as u64;
    let hi = (mu + 12.0 * sd + 40.0) as u64;
    (lo, hi)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact `Var(1/Y)` for `Y ~ chi2_n(lambda)`, `n >= 5`, through the Poisson
/// mixture of central chi-squares.
pub fn inverse_noncentral_chi2_variance(n: usize, lambda: f64) -> Result<f64> {
    floor_check(n, 5, "inverse chi-square variance")?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("noncentrality must be nonnegative, got {lambda}"));
    }
    let mu = 0.5 * lambda;
    let (lo, hi) = poisson_range(mu);
    let (mut m1, mut m2) = (0.0, 0.0);
    for k in lo..=hi {
        let w = ln_poisson(k, mu).exp();
        let d = n as f64 + 2.0 * k as f64;
        m1 += w / (d - 2.0);
        m2 += w / ((d - 2.0) * (d - 4.0));
    }
    Ok(m2 - m1 * m1)
}

/// `ln P(Y <= x)` for `Y ~ chi2_n(lambda)`.
pub fn ln_noncentral_chi2_cdf(n: usize, lambda: f64, x: f64) -> Result<f64> {
    if n == 0 || !(lambda >= 0.0) || !(x >= 0.0) {
        return invalid("need n >= 1, lambda >= 0 and x >= 0");
    }
    let mu = 0.5 * lambda;
    let (_, hi) = poisson_range(mu);
    let terms: Vec<f64> = (0..=hi)
        .map(|k| ln_poisson(k, mu) + gamma_lr(0.5 * n as f64 + k as f64, 0.5 * x).ln())
        .collect();
    Ok(log_sum_exp(&terms))
}

fn noncentral_chi2_draw(n: usize, lambda: f64, rng: &mut ChaCha8Rng) -> f64 {
    let shift = (lambda / n as f64).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (z + shift) * (z + shift)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseMomentCell {
    pub n: usize,
    pub lambda: f64,
    pub exact: f64,
    pub mc: f64,
    pub mc_se: f64,
    /// `k1(n) n^-3`
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseMomentReport {
    pub cells: Vec<InverseMomentCell>,
}

impl InverseMomentReport {
    pub fn all_hold(&self) -> bool {
        self.cells.iter().all(|c| c.holds)
    }
}

/// `Var(1/Y) <= k1(n) n^-3` for `Y ~ chi2_n(lambda_n)`, checked exactly and
/// by Monte Carlo.
pub fn check_lemma_a1(n_grid: &[usize], lambda_family: &dyn Fn(usize) -> f64, mc_cfg: &McConfig) -> Result<InverseMomentReport> {
    let mut cells = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let lambda = lambda_family(n);
        let exact = inverse_noncentral_chi2_variance(n, lambda)?;
        let bound = k1(n)? / (n as f64).powi(3);
        let seed = mc_cfg.master_seed ^ (n as u64) << 20;
        let inv = mc::indexed_map(seed, mc_cfg.replicates, |_, rng| 1.0 / noncentral_chi2_draw(n, lambda, rng));
        let (v, se) = variance_se(&inv);
        cells.push(InverseMomentCell {
            n,
            lambda,
            exact,
            mc: v,
            mc_se: se,
            bound,
            holds: exact <= bound && v <= bound + 3.0 * se,
        });
    }
    Ok(InverseMomentReport { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Plain,
    Importance,
    /// No mass can fall below the cut.
    Zero,
    /// Too few hits and importance sampling was disabled.
    TooRare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub n: usize,
    pub lambda: f64,
    pub probability: f64,
    pub se: f64,
    /// Poisson-mixture value of the same probability.
    pub exact: f64,
    /// `lambda^2 P(Y <= n - 2)`
    pub statistic: f64,
    pub method: TailMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub cells: Vec<TailCell>,
    pub slope: f64,
    pub halfwidth: f64,
    pub verdict: Verdict,
}

/// Tilted estimate of `P(chi2_n(lambda) <= n - 2)`: draws come from the
/// exponentially tilted law, a scaled noncentral chi-square with mean
/// `n - 2`.
fn tilted_tail(n: usize, lambda: f64, mc_cfg: &McConfig) -> (f64, f64) {
    let nf = n as f64;
    let cut = nf - 2.0;
    let u = (-nf + (nf * nf + 4.0 * lambda * cut).sqrt()) / (2.0 * lambda);
    let t = 0.5 * (1.0 - 1.0 / u);
    let log_mgf = -0.5 * nf * (1.0 - 2.0 * t).ln() + lambda * t / (1.0 - 2.0 * t);
    let seed = mc_cfg.master_seed ^ 0x5EED ^ (n as u64) << 24;
    let w = mc::indexed_map(seed, mc_cfg.replicates, |_, rng| {
        let y = u * noncentral_chi2_draw(n, lambda * u, rng);
        if y <= cut {
            (log_mgf - t * y).exp()
        } else {
            0.0
        }
    });
    mean_se(&w)
}

/// `lambda_n^2 P(chi2_n(lambda_n) <= n - 2)` across the grid, with a slope
/// verdict at threshold 1.1. Plain Monte Carlo is used unless it sees fewer
/// than ten hits, in which case importance sampling takes over when
/// `importance` is set.
pub fn check_lemma_a2(n_grid: &[usize], lambda_family: &dyn Fn(usize) -> f64, mc_cfg: &McConfig, importance: bool) -> Result<TailReport> {
    if n_grid.len() < 3 {
        return invalid("dimension grid needs at least three points");
    }
    let mut cells = Vec::with_capacity(n_grid.len());
    let mut prev = f64::NEG_INFINITY;
    for &n in n_grid {
        floor_check(n, 3, "tail check")?;
        let lambda = lambda_family(n);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("noncentrality must be nonnegative, got {lambda} at n = {n}"));
        }
        if lambda < prev {
            return invalid("noncentrality sequence must be nondecreasing");
        }
        prev = lambda;
        let cut = n as f64 - 2.0;
        let exact = ln_noncentral_chi2_cdf(n, lambda, cut)?.exp();
        if lambda == 0.0 {
            cells.push(TailCell { n, lambda, probability: exact, se: 0.0, exact, statistic: 0.0, method: TailMethod::Zero });
            continue;
        }
        let seed = mc_cfg.master_seed ^ (n as u64) << 16;
        let hits = mc::indexed_map(seed, mc_cfg.replicates, |_, rng| f64::from(u8::from(noncentral_chi2_draw(n, lambda, rng) <= cut)));
        let count = hits.iter().filter(|h| **h > 0.0).count();
        let (p, se, method) = if count >= 10 {
            let (p, se) = mean_se(&hits);
            (p, se, TailMethod::Plain)
        } else if importance {
            let (p, se) = tilted_tail(n, lambda, mc_cfg);
            (p, se, TailMethod::Importance)
        } else {
            (f64::NAN, f64::NAN, TailMethod::TooRare)
        };
        cells.push(TailCell { n, lambda, probability: p, se, exact, statistic: lambda * lambda * p, method });
    }
    let (slope, halfwidth, verdict) = if cells.iter().any(|c| c.method == TailMethod::TooRare) {
        (f64::NAN, f64::NAN, Verdict::Indeterminate)
    } else if cells.iter().all(|c| c.statistic == 0.0) {
        (0.0, 0.0, Verdict::Pass)
    } else if cells.iter().any(|c| !(c.statistic > 0.0)) {
        (f64::NAN, f64::NAN, Verdict::Indeterminate)
    } else {
        let xs: Vec<f64> = cells.iter().map(|c| (c.n as f64).ln()).collect();
        let ys: Vec<f64> = cells.iter().map(|c| c.statistic.ln()).collect();
        let fit = fit_line(&xs, &ys);
        let v = if fit.slope - fit.slope_ci_halfwidth <= 1.1 { Verdict::Pass } else { Verdict::Fail };
        (fit.slope, fit.slope_ci_halfwidth, v)
    };
    Ok(TailReport { cells, slope, halfwidth, verdict })
}

/// Both sides of the reciprocal-variance inequality for one distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalVarianceCheck {
    pub lhs: f64,
    /// `(1 + EY)^-4 Var(Y)`, the form as stated
    pub rhs_stated: f64,
    /// `(1 + EY)^-2 Var(Y)`
    pub rhs_corrected: f64,
}

const REL_SLACK: f64 = 1e-12;

impl ReciprocalVarianceCheck {
    fn from_moments(ey: f64, var_y: f64, e_inv: f64, e_inv2: f64) -> Self {
        Self {
            lhs: (e_inv2 - e_inv * e_inv).max(0.0),
            rhs_stated: var_y / (1.0 + ey).powi(4),
            rhs_corrected: var_y / (1.0 + ey).powi(2),
        }
    }

    pub fn holds_stated(&self) -> bool {
        self.lhs <= self.rhs_stated * (1.0 + REL_SLACK) + 1e-300
    }

    pub fn holds_corrected(&self) -> bool {
        self.lhs <= self.rhs_corrected * (1.0 + REL_SLACK) + 1e-300
    }
}

/// Checks the reciprocal-variance inequality on the empirical distribution
/// of `samples` (population moments, so the comparison is exact for it).
pub fn check_lemma_a3(samples: &[f64]) -> Result<ReciprocalVarianceCheck> {
    if samples.is_empty() {
        return invalid("no samples");
    }
    let w = vec![1.0 / samples.len() as f64; samples.len()];
    lemma_a3_discrete(samples, &w)
}

/// Exact check for a finite distribution with the given atoms and weights.
pub fn lemma_a3_discrete(atoms: &[f64], weights: &[f64]) -> Result<ReciprocalVarianceCheck> {
    check_discrete(atoms, weights)?;
    if let Some(y) = atoms.iter().find(|y| !(**y >= 0.0)) {
        return invalid(format!("reciprocal-variance check needs nonnegative values, got {y}"));
    }
    let ey: f64 = atoms.iter().zip(weights).map(|(y, w)| w * y).sum();
    let var_y: f64 = atoms.iter().zip(weights).map(|(y, w)| w * (y - ey) * (y - ey)).sum();
    let e_inv: f64 = atoms.iter().zip(weights).map(|(y, w)| w / (1.0 + y)).sum();
    let var_inv: f64 = atoms
        .iter()
        .zip(weights)
        .map(|(y, w)| {
            let d = 1.0 / (1.0 + y) - e_inv;
            w * d * d
        })
        .sum();
    Ok(ReciprocalVarianceCheck {
        lhs: var_inv,
        rhs_stated: var_y / (1.0 + ey).powi(4),
        rhs_corrected: var_y / (1.0 + ey).powi(2),
    })
}

fn check_discrete(atoms: &[f64], weights: &[f64]) -> Result<()> {
    if atoms.is_empty() || atoms.len() != weights.len() {
        return invalid("need one weight per atom and at least one atom");
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return invalid("weights must be nonnegative");
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return invalid(format!("weights sum to {s}, not 1"));
    }
    if atoms.iter().any(|a| !a.is_finite()) {
        return invalid("atoms must be finite");
    }
    Ok(())
}

/// `Y ~ Uniform(0, b)`, closed form.
pub fn lemma_a3_uniform(b: f64) -> Result<ReciprocalVarianceCheck> {
    if !(b > 0.0) {
        return invalid("uniform width must be positive");
    }
    let e_inv = b.ln_1p() / b;
    let e_inv2 = 1.0 / (1.0 + b);
    Ok(ReciprocalVarianceCheck::from_moments(0.5 * b, b * b / 12.0, e_inv, e_inv2))
}

/// `Y ~ Gamma(shape k, scale s)`, reciprocal moments by quadrature.
pub fn lemma_a3_gamma(k: f64, s: f64) -> Result<ReciprocalVarianceCheck> {
    if !(k > 0.0 && s > 0.0) {
        return invalid("gamma shape and scale must be positive");
    }
    let lg = ln_gamma(k);
    // Y = s X with X ~ Gamma(k, 1); t = X / (1 + X) maps (0, inf) onto (0, 1)
    let moment = |j: i32| -> Result<f64> {
        let log_f = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                return f64::NEG_INFINITY;
            }
            let x = t / (1.0 - t);
            (k - 1.0) * x.ln() - x - lg - 2.0 * (1.0 - t).ln() - j as f64 * (s * x).ln_1p()
        };
        Ok(quad::log_integrate(&log_f, 0.0, 1.0, 1e-12)?.exp())
    };
    Ok(ReciprocalVarianceCheck::from_moments(k * s, k * s * s, moment(1)?, moment(2)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivePartCheck {
    pub var_positive: f64,
    pub var: f64,
}

impl PositivePartCheck {
    pub fn holds(&self) -> bool {
        self.var_positive <= self.var * (1.0 + REL_SLACK) + 1e-300
    }
}

/// `Var(X+) <= Var(X)` on the empirical distribution of `samples`.
pub fn check_lemma_a4(samples: &[f64]) -> Result<PositivePartCheck> {
    if samples.is_empty() {
        return invalid("no samples");
    }
    let w = vec![1.0 / samples.len() as f64; samples.len()];
    lemma_a4_discrete(samples, &w)
}

pub fn lemma_a4_discrete(atoms: &[f64], weights: &[f64]) -> Result<PositivePartCheck> {
    check_discrete(atoms, weights)?;
    let var = |f: &dyn Fn(f64) -> f64| {
        let m: f64 = atoms.iter().zip(weights).map(|(x, w)| w * f(*x)).sum();
        atoms.iter().zip(weights).map(|(x, w)| w * (f(*x) - m).powi(2)).sum::<f64>()
    };
    Ok(PositivePartCheck {
        var_positive: var(&|x| x.max(0.0)),
        var: var(&|x| x),
    })
}

/// `X ~ N(mu, sigma^2)`, closed form.
pub fn lemma_a4_normal(mu: f64, sigma: f64) -> Result<PositivePartCheck> {
    if !(sigma > 0.0) {
        return invalid("standard deviation must be positive");
    }
    let z = mu / sigma;
    let std = Normal::standard();
    let (cdf, pdf) = (std.cdf(z), std.pdf(z));
    let m1 = mu * cdf + sigma * pdf;
    let m2 = (mu * mu + sigma * sigma) * cdf + mu * sigma * pdf;
    Ok(PositivePartCheck {
        var_positive: (m2 - m1 * m1).max(0.0),
        var: sigma * sigma,
    })
}

/// One randomized test distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CorpusEntry {
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
    Uniform { width: f64 },
    Gamma { shape: f64, scale: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub reciprocal_checked: usize,
    pub violations_stated: usize,
    pub violations_corrected: usize,
    pub positive_part_checked: usize,
    pub positive_part_violations: usize,
    /// Worst `lhs / rhs_stated` seen.
    pub worst_stated_ratio: f64,
}

impl CorpusReport {
    pub fn reciprocal_holds_as_stated(&self) -> bool {
        self.violations_stated == 0
    }
}

fn random_discrete(rng: &mut ChaCha8Rng, signed: bool) -> CorpusEntry {
    let k = rng.random_range(2..=6usize);
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let atoms: Vec<f64> = (0..k)
        .map(|_| {
            if signed {
                scale * (rng.sample::<f64, _>(StandardNormal) + rng.random_range(-1.0..1.0))
            } else {
                scale * rng.sample::<f64, _>(Exp1)
            }
        })
        .collect();
    let alpha = rng.random_range(0.3..3.0);
    // symmetric Dirichlet through normalized Gamma draws
    let g = Gamma::new(alpha, 1.0).expect("positive shape");
    let weights: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
    let s: f64 = weights.iter().sum();
    CorpusEntry::Discrete {
        atoms,
        weights: weights.iter().map(|w| w / s).collect(),
    }
}

/// `count` distributions for the reciprocal-variance check (nonnegative
/// discrete, uniform and gamma laws) followed by `count` distributions for
/// the positive-part check (signed discrete and normal laws).
pub fn random_corpus(count: usize, seed: u64) -> (Vec<CorpusEntry>, Vec<CorpusEntry>) {
    let reciprocal = mc::indexed_map(seed, count, |i, rng| match i % 5 {
        0..=2 => random_discrete(rng, false),
        3 => CorpusEntry::Uniform { width: 10f64.powf(rng.random_range(-2.0..2.0)) },
        _ => CorpusEntry::Gamma {
            shape: 10f64.powf(rng.random_range(-0.5..1.0)),
            scale: 10f64.powf(rng.random_range(-1.5..1.5)),
        },
    });
    let positive = mc::indexed_map(seed ^ 0xA4, count, |i, rng| {
        if i % 4 == 3 {
            CorpusEntry::Normal {
                mean: rng.random_range(-3.0..3.0),
                sd: 10f64.powf(rng.random_range(-1.0..1.0)),
            }
        } else {
            random_discrete(rng, true)
        }
    });
    (reciprocal, positive)
}

pub fn reciprocal_check(entry: &CorpusEntry) -> Result<ReciprocalVarianceCheck> {
    match entry {
        CorpusEntry::Discrete { atoms, weights } => lemma_a3_discrete(atoms, weights),
        CorpusEntry::Uniform { width } => lemma_a3_uniform(*width),
        CorpusEntry::Gamma { shape, scale } => lemma_a3_gamma(*shape, *scale),
        CorpusEntry::Normal { .. } => invalid("normal laws take negative values"),
    }
}

pub fn positive_part_check(entry: &CorpusEntry) -> Result<PositivePartCheck> {
    match entry {
        CorpusEntry::Discrete { atoms, weights } => lemma_a4_discrete(atoms, weights),
        CorpusEntry::Normal { mean, sd } => lemma_a4_normal(*mean, *sd),
        CorpusEntry::Uniform { width } => Ok(PositivePartCheck { var_positive: width * width / 12.0, var: width * width / 12.0 }),
        CorpusEntry::Gamma { shape, scale } => Ok(PositivePartCheck { var_positive: shape * scale * scale, var: shape * scale * scale }),
    }
}

/// Runs both inequality checks over a fresh randomized corpus.
pub fn run_corpus(count: usize, seed: u64) -> Result<CorpusReport> {
    let (rec, pos) = random_corpus(count, seed);
    let rc: Vec<ReciprocalVarianceCheck> = rec.iter().map(reciprocal_check).collect::<Result<_>>()?;
    let pc: Vec<PositivePartCheck> = pos.iter().map(positive_part_check).collect::<Result<_>>()?;
    let worst = rc
        .iter()
        .filter(|c| c.rhs_stated > 0.0)
        .map(|c| c.lhs / c.rhs_stated)
        .fold(0.0, f64::max);
    Ok(CorpusReport {
        reciprocal_checked: rc.len(),
        violations_stated: rc.iter().filter(|c| !c.holds_stated()).count(),
        violations_corrected: rc.iter().filter(|c| !c.holds_corrected()).count(),
        positive_part_checked: pc.len(),
        positive_part_violations: pc.iter().filter(|c| !c.holds()).count(),
        worst_stated_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_examples() {
        let c = constants(10).unwrap();
        assert!((c.a_n - 3.0 * (8.0f64 / 7.0).powi(2)).abs() < 1e-12);
        assert!((c.a_n - 3.9184).abs() < 1e-4);
        assert!((c.k1 - 7.8125).abs() < 1e-12);
        assert!((k3(100).unwrap() - 1.9533).abs() < 1e-4);
        assert!(constants(9).unwrap_err().to_string().contains("k2"));
        assert!(k1(4).unwrap_err().to_string().contains("k1"));
        assert!(k3(2).is_err());
    }

    #[test]
    fn constants_positive_and_approach_limits() {
        let mut prev = constants(10).unwrap();
        for n in [11usize, 20, 50, 100, 1000, 100_000] {
            let c = constants(n).unwrap();
            for v in [c.a_n, c.b_n, c.l_n, c.e_n, c.f_n, c.k1, c.k2, c.k3] {
                assert!(v > 0.0);
            }
            assert!(c.a_n < prev.a_n && c.l_n < prev.l_n && c.k1 < prev.k1);
            prev = c;
        }
        let c = constants(10_000_000).unwrap();
        assert!((c.a_n - 3.0).abs() < 1e-5 && (c.l_n - 3.0).abs() < 1e-5);
    }

    #[test]
    fn envelope_and_oracle_values() {
        assert!((dimension_free_envelope(0.1).unwrap() - 3827.6).abs() < 0.05);
        assert!((oracle_bound_xu(0.1).unwrap() - 4520.0).abs() < 1e-9);
        assert!((oracle_bound_paper(0.1).unwrap() - 3678.6).abs() < 0.05);
        assert!((oracle_bound_paper(1.0).unwrap() - 25.2).abs() < 1e-12);
        assert!((oracle_bound_xu(1.0).unwrap() - 11.0).abs() < 1e-12);
        assert!(oracle_bound_paper(0.1).unwrap() < oracle_bound_xu(0.1).unwrap());
        for r in [1.0, 2.0, 5.0] {
            assert!(oracle_bound_paper(r).unwrap() > oracle_bound_xu(r).unwrap());
        }
    }

    #[test]
    fn deviation_bound_decreases_in_r_and_sits_under_envelope() {
        let rs: Vec<f64> = (1..200).map(|i| 0.05 * i as f64).collect();
        for n in [10usize, 50, 1000] {
            let vals: Vec<f64> = rs.iter().map(|r| theorem2_deviation_bound(n, *r).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
        for n in [30usize, 31, 50, 100, 1000, 10_000] {
            for r in [0.1, 0.5, 1.0, 3.0] {
                assert!(theorem2_deviation_bound(n, r).unwrap() <= dimension_free_envelope(r).unwrap());
            }
        }
        assert!(theorem2_deviation_bound(10, 0.0).is_err());
    }

    #[test]
    fn suboptimality_examples() {
        assert_eq!(suboptimality_factor(1.0).unwrap(), 2.0);
        assert_eq!(suboptimality_factor(0.5).unwrap(), 3.0);
        assert!((suboptimality_factor(1e12).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn inverse_variance_central_case() {
        for n in [5usize, 10, 37] {
            let nf = n as f64;
            let exact = 2.0 / ((nf - 2.0).powi(2) * (nf - 4.0));
            assert!((inverse_noncentral_chi2_variance(n, 0.0).unwrap() - exact).abs() < 1e-15);
            assert!(exact <= k1(n).unwrap() / nf.powi(3) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lemma_a1_cells() {
        let m = McConfig::new(20_000, 3).unwrap();
        let rep = check_lemma_a1(&[10, 30, 100], &|_| 0.0, &m).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        assert!(rep.cells[0].mc <= 7.8125e-3 + 3.0 * rep.cells[0].mc_se);
        let rep = check_lemma_a1(&[100], &|n| n as f64, &m).unwrap();
        assert!(rep.all_hold());
        let c = rep.cells[0];
        assert!((c.mc - c.exact).abs() < 4.0 * c.mc_se);
    }

    #[test]
    fn noncentral_cdf_matches_central_and_simulation() {
        // central case against statrs directly
        let v = ln_noncentral_chi2_cdf(10, 0.0, 8.0).unwrap().exp();
        assert!((v - gamma_lr(5.0, 4.0)).abs() < 1e-14);
        let m = McConfig::new(40_000, 1).unwrap();
        let hits = mc::indexed_map(9, m.replicates, |_, rng| f64::from(u8::from(noncentral_chi2_draw(20, 5.0, rng) <= 18.0)));
        let (p, se) = mean_se(&hits);
        let exact = ln_noncentral_chi2_cdf(20, 5.0, 18.0).unwrap().exp();
        assert!((p - exact).abs() < 4.0 * se);
    }

    #[test]
    fn tail_statistics() {
        let m = McConfig::new(4000, 2).unwrap();
        let grid = [10usize, 30, 100, 300, 1000];
        let zero = check_lemma_a2(&grid, &|_| 0.0, &m, true).unwrap();
        assert_eq!(zero.verdict, Verdict::Pass);
        assert!(zero.cells.iter().all(|c| c.statistic == 0.0));
        let root = check_lemma_a2(&grid, &|n| (n as f64).sqrt(), &m, true).unwrap();
        assert!(root.cells.iter().all(|c| c.statistic <= c.lambda * c.lambda));
        assert_eq!(root.verdict, Verdict::Pass);
        let lin = check_lemma_a2(&grid, &|n| n as f64, &m, true).unwrap();
        assert_eq!(lin.verdict, Verdict::Pass);
        for c in &lin.cells {
            if c.method == TailMethod::Importance {
                assert!((c.probability - c.exact).abs() <= 4.0 * c.se + 1e-3 * c.exact, "{c:?}");
            }
        }
        assert!(lin.cells.iter().any(|c| c.method == TailMethod::Importance));
        let plain = check_lemma_a2(&grid, &|n| n as f64, &m, false).unwrap();
        assert_eq!(plain.verdict, Verdict::Indeterminate);
    }

    #[test]
    fn reciprocal_variance_examples() {
        let c = check_lemma_a3(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs_stated, 0.0);
        // uniform on {0, 2}
        let c = lemma_a3_discrete(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert!((c.lhs - 1.0 / 9.0).abs() < 1e-15);
        assert!((c.rhs_stated - 0.0625).abs() < 1e-15);
        assert!(!c.holds_stated() && c.holds_corrected());
        assert!(check_lemma_a3(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn exponential_example() {
        // E 1/(1+Y) = e E1(1), E 1/(1+Y)^2 = 1 - e E1(1)
        let c = lemma_a3_gamma(1.0, 1.0).unwrap();
        let ee1 = 0.596_347_362_323_194;
        let exact = (1.0 - ee1) - ee1 * ee1;
        assert!((c.lhs - exact).abs() < 1e-10, "{}", c.lhs);
        assert!((c.lhs - 0.0480).abs() < 1e-4);
        assert!((c.rhs_stated - 0.0625).abs() < 1e-15);
        assert!(c.holds_stated());
    }

    #[test]
    fn uniform_closed_form_matches_quadrature() {
        let b = 3.0;
        let c = lemma_a3_uniform(b).unwrap();
        let e1 = quad::integrate(&|y| 1.0 / (b * (1.0 + y)), 0.0, b, 1e-14).unwrap();
        let e2 = quad::integrate(&|y| 1.0 / (b * (1.0 + y) * (1.0 + y)), 0.0, b, 1e-14).unwrap();
        assert!((c.lhs - (e2 - e1 * e1)).abs() < 1e-13);
    }

    #[test]
    fn positive_part_examples() {
        let c = lemma_a4_discrete(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!((c.var_positive - 0.25).abs() < 1e-15 && (c.var - 1.0).abs() < 1e-15);
        let n = lemma_a4_normal(0.0, 1.0).unwrap();
        // Var(X+) = 1/2 - 1/(2 pi) for a standard normal
        assert!((n.var_positive - (0.5 - 0.5 / std::f64::consts::PI)).abs() < 1e-14);
        assert!(n.holds());
    }

    #[test]
    fn corpus_counts() {
        let rep = run_corpus(500, 17).unwrap();
        assert_eq!(rep.violations_corrected, 0);
        assert_eq!(rep.positive_part_violations, 0);
        assert!(rep.violations_stated > 0);
    }
}
