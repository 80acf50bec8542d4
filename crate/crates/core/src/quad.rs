//! Quadrature helpers on top of the double-exponential and Gauss-Legendre
//! rules.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Adaptive integral over a finite interval, starting from eight equal
/// pieces. Pieces with the largest error
/// estimate are bisected until the summed estimate falls below `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    const MAX_PIECES: usize = 4000;
    let piece = |lo: f64, hi: f64| {
        let out = quadrature::double_exponential::integrate(f, lo, hi, 0.25 * abs_tol);
        let floor = 4.0 * f64::EPSILON * out.integral.abs();
        (lo, hi, out.integral, out.error_estimate.max(floor))
    };
    // an initial split guards against narrow peaks the first pass never sees
    const START: usize = 8;
    let h = (b - a) / START as f64;
    let mut pieces: Vec<_> = (0..START)
        .map(|i| piece(a + h * i as f64, if i + 1 == START { b } else { a + h * (i + 1) as f64 }))
        .collect();
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        if !total.is_finite() {
            return Err(Error::Numerical(format!("quadrature on [{a}, {b}] produced {total}")));
        }
        if total_err <= abs_tol.max(1e-12 * total.abs()) {
            return Ok(total);
        }
        if pieces.len() >= MAX_PIECES {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge: estimate {total} error {total_err}"
            )));
        }
        let (k, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(k);
        let m = 0.5 * (lo + hi);
        pieces.push(piece(lo, m));
        pieces.push(piece(m, hi));
    }
}

/// `ln \int_a^b exp(log_f(t)) dt` for integrands that may over- or underflow.
///
/// The log-integrand is scanned on a grid to locate its peak; the integral is
/// taken over the region within `exp(-60)` of the peak, split at the peak.
pub fn log_integrate<F: Fn(f64) -> f64>(log_f: &F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const GRID: usize = 400;
    let h = (b - a) / GRID as f64;
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    let vals: Vec<f64> = (0..=GRID).map(|i| log_f(a + h * i as f64)).collect();
    for (i, v) in vals.iter().enumerate() {
        if *v > best {
            best = *v;
            arg = i;
        }
    }
    if !best.is_finite() {
        return Err(Error::Numerical(format!(
            "log-integrand has no finite value on [{a}, {b}]"
        )));
    }
    let cut = best - 60.0;
    let lo_i = (0..=arg).rev().find(|&i| vals[i] < cut).unwrap_or(0);
    let hi_i = (arg..=GRID).find(|&i| vals[i] < cut).unwrap_or(GRID);
    let lo = a + h * lo_i as f64;
    let hi = a + h * hi_i as f64;
    let peak = a + h * arg as f64;
    let crude: f64 = vals[lo_i..=hi_i].iter().map(|v| (v - best).exp()).sum::<f64>() * h;
    let tol = rel_tol * crude.max(f64::MIN_POSITIVE);
    let g = |t: f64| (log_f(t) - best).exp();
    let mut total = 0.0;
    if peak > lo {
        total += integrate(&g, lo, peak, 0.5 * tol)?;
    }
    if hi > peak {
        total += integrate(&g, peak, hi, 0.5 * tol)?;
    }
    if !(total > 0.0) {
        return Err(Error::Numerical("log-integral collapsed to zero".into()));
    }
    Ok(best + total.ln())
}

/// Gauss-Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(points: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(points).expect("at least one node"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.as_node_weight_pairs()
        .iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}
