//! Empirical order-of-growth checks for a location estimator and its risk
//! estimate across a grid of dimensions.
//!
//! Each condition reduces to one statistic per dimension. Growth is judged by
//! the least-squares slope of `log statistic` on `log n`: a condition passes
//! when `slope - halfwidth <= threshold`, with `halfwidth` the 95% t interval
//! half-width.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::LocationEstimator;
use crate::mc;
use crate::model::{draw_past, McConfig, ParamPoint, PredictiveProblem};
use crate::stats::{dist_sq, fit_line, mean_se, variance_se};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Quadratic risk grows at most linearly.
    P1,
    /// Variance of the quadratic loss grows at most linearly.
    P2,
    /// `n Var{(1 + L/(nr))^-1}` stays bounded.
    P2a,
    /// Bias of the risk estimate grows at most like `sqrt(n)`.
    P31,
    /// Variance of the risk estimate grows at most linearly.
    P32,
    /// `n Var{(1 + U/(nr))^-1}` stays bounded.
    P33,
}

impl Condition {
    pub const ALL: [Condition; 6] = [Self::P1, Self::P2, Self::P2a, Self::P31, Self::P32, Self::P33];

    /// Largest admissible log-log slope, including 0.1 slack.
    pub fn threshold(self) -> f64 {
        match self {
            Self::P1 | Self::P2 | Self::P32 => 1.1,
            Self::P31 => 0.55,
            Self::P2a | Self::P33 => 0.1,
        }
    }

    fn companion(self) -> Option<Condition> {
        match self {
            Self::P2a => Some(Self::P2),
            Self::P33 => Some(Self::P32),
            _ => None,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::P1 => "P1",
            Self::P2 => "P2",
            Self::P2a => "P2a",
            Self::P31 => "P31",
            Self::P32 => "P32",
            Self::P33 => "P33",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

/// What decided a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Slope,
    /// Bounded through `Var{(1+Y)^-1} <= (1+EY)^-2 Var(Y)` for `Y >= 0`
    /// together with a passing companion variance condition.
    Certificate,
    /// Every statistic is exactly zero.
    Degenerate,
    /// Some flattening coefficient `1 + U/(nr)` was not positive.
    Nonpositive,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub name: Condition,
    /// `(n, value, se)`
    pub statistic_by_n: Vec<(usize, f64, f64)>,
    pub loglog_slope: f64,
    pub slope_halfwidth: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub route: Route,
}

impl ConditionRecord {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaslReport {
    pub estimator: String,
    pub r: f64,
    pub records: Vec<ConditionRecord>,
}

impl RaslReport {
    pub fn get(&self, c: Condition) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| r.name == c)
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(ConditionRecord::passed)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(format!("json encoding failed: {e}")))
    }

    /// Rows of `condition,n,value,se,slope,halfwidth,threshold,verdict,route`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,n,value,se,slope,halfwidth,threshold,verdict,route\n");
        for rec in &self.records {
            for (n, v, se) in &rec.statistic_by_n {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    rec.name,
                    n,
                    v,
                    se,
                    rec.loglog_slope,
                    rec.slope_halfwidth,
                    rec.threshold,
                    serde_json::to_value(rec.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    serde_json::to_value(rec.route).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                ));
            }
        }
        out
    }
}

/// Maps a dimension to the parameter used at that dimension.
pub type ThetaFamily<'a> = dyn Fn(usize) -> Result<ParamPoint> + Sync + 'a;

/// `theta_n` with `||theta_n||^2 = n a`.
pub fn radial_family(a: f64) -> impl Fn(usize) -> Result<ParamPoint> + Sync {
    move |n| ParamPoint::radial(n, a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaslConfig {
    pub n_grid: Vec<usize>,
    pub r: f64,
    pub mc: McConfig,
}

impl RaslConfig {
    pub fn new(n_grid: Vec<usize>, r: f64, mc: McConfig) -> Result<Self> {
        if n_grid.len() < 3 {
            return invalid("dimension grid needs at least three points");
        }
        if n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("dimension grid must be strictly increasing");
        }
        if n_grid[0] < 1 {
            return invalid("dimensions must be positive");
        }
        if !(r > 0.0 && r.is_finite()) {
            return invalid(format!("r must be positive and finite, got {r}"));
        }
        Ok(Self { n_grid, r, mc })
    }
}

/// Per-replicate draws at one dimension.
struct Cell {
    n: usize,
    loss: Vec<f64>,
    risk_est: Option<Vec<f64>>,
}

fn cell_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn simulate(estimator: &LocationEstimator, family: &ThetaFamily<'_>, cfg: &RaslConfig, with_u: bool) -> Result<Vec<Cell>> {
    if with_u && !estimator.has_risk_estimator() {
        return invalid(format!("estimator {} carries no risk estimate", estimator.name()));
    }
    let mut cells = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let problem = PredictiveProblem::normalized(n, cfg.r)?;
        let theta = family(n)?;
        problem.check_len(theta.theta(), "theta")?;
        let t = theta.theta();
        let mc_cfg = McConfig::with_inner(cfg.mc.replicates, cell_seed(cfg.mc.master_seed, n), 1)?;
        let draws = mc::try_replicate_map(&mc_cfg, |_, rng| {
            let x = draw_past(&problem, t, rng);
            let est = estimator.estimate(&problem, &x)?;
            let u = if with_u { Some(estimator.risk_estimate(&problem, &x)?) } else { None };
            Ok::<_, Error>((dist_sq(&est, t), u))
        })?;
        let loss = draws.iter().map(|d| d.0).collect();
        let risk_est = with_u.then(|| draws.iter().map(|d| d.1.unwrap_or(f64::NAN)).collect());
        cells.push(Cell { n, loss, risk_est });
    }
    Ok(cells)
}

fn reciprocal_stat(n: usize, r: f64, ys: &[f64]) -> (f64, f64) {
    let nr = n as f64 * r;
    let inv: Vec<f64> = ys.iter().map(|y| 1.0 / (1.0 + y / nr)).collect();
    let (v, se) = variance_se(&inv);
    (n as f64 * v, n as f64 * se)
}

fn statistic(c: Condition, cell: &Cell, r: f64) -> (f64, f64) {
    match c {
        Condition::P1 => mean_se(&cell.loss),
        Condition::P2 => variance_se(&cell.loss),
        Condition::P2a => reciprocal_stat(cell.n, r, &cell.loss),
        Condition::P31 => {
            let u = cell.risk_est.as_deref().unwrap_or(&[]);
            let d: Vec<f64> = u.iter().zip(&cell.loss).map(|(u, l)| u - l).collect();
            let (b, se) = mean_se(&d);
            (b.abs(), se)
        }
        Condition::P32 => variance_se(cell.risk_est.as_deref().unwrap_or(&[])),
        Condition::P33 => reciprocal_stat(cell.n, r, cell.risk_est.as_deref().unwrap_or(&[])),
    }
}

fn slope_record(c: Condition, stats: Vec<(usize, f64, f64)>) -> ConditionRecord {
    let threshold = c.threshold();
    let mut rec = ConditionRecord {
        name: c,
        statistic_by_n: stats,
        loglog_slope: f64::NAN,
        slope_halfwidth: f64::NAN,
        threshold,
        verdict: Verdict::Indeterminate,
        route: Route::NonFinite,
    };
    if rec.statistic_by_n.iter().any(|(_, v, se)| !v.is_finite() || !se.is_finite()) {
        return rec;
    }
    if rec.statistic_by_n.iter().all(|(_, v, _)| *v == 0.0) {
        rec.loglog_slope = 0.0;
        rec.slope_halfwidth = 0.0;
        rec.verdict = Verdict::Pass;
        rec.route = Route::Degenerate;
        return rec;
    }
    let xs: Vec<f64> = rec.statistic_by_n.iter().map(|(n, _, _)| (*n as f64).ln()).collect();
    // Values indistinguishable from zero are replaced by an upper confidence
    // value so the logarithm exists.
    let ys: Vec<f64> = rec
        .statistic_by_n
        .iter()
        .map(|(_, v, se)| if *v <= 2.0 * se { (v.abs() + 2.0 * se).ln() } else { v.ln() })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return rec;
    }
    let fit = fit_line(&xs, &ys);
    rec.loglog_slope = fit.slope;
    rec.slope_halfwidth = if fit.slope_ci_halfwidth.is_finite() { fit.slope_ci_halfwidth } else { 0.0 };
    rec.route = Route::Slope;
    rec.verdict = if rec.loglog_slope - rec.slope_halfwidth <= threshold { Verdict::Pass } else { Verdict::Fail };
    rec
}

fn build_record(c: Condition, cells: &[Cell], r: f64, companion: Option<&ConditionRecord>) -> ConditionRecord {
    let stats = cells
        .iter()
        .map(|cell| {
            let (v, se) = statistic(c, cell, r);
            (cell.n, v, se)
        })
        .collect();
    if c == Condition::P33 {
        let nonpositive = cells.iter().any(|cell| {
            let nr = cell.n as f64 * r;
            cell.risk_est.as_deref().unwrap_or(&[]).iter().any(|u| 1.0 + u / nr <= 0.0)
        });
        if nonpositive {
            return ConditionRecord {
                name: c,
                statistic_by_n: stats,
                loglog_slope: f64::NAN,
                slope_halfwidth: f64::NAN,
                threshold: c.threshold(),
                verdict: Verdict::Fail,
                route: Route::Nonpositive,
            };
        }
    }
    let mut rec = slope_record(c, stats);
    if rec.verdict != Verdict::Pass {
        if let (Some(_), Some(comp)) = (c.companion(), companion) {
            let samples_nonneg = cells.iter().all(|cell| {
                let ys = if c == Condition::P2a { &cell.loss[..] } else { cell.risk_est.as_deref().unwrap_or(&[]) };
                ys.iter().all(|y| *y >= 0.0)
            });
            if comp.passed() && samples_nonneg {
                rec.verdict = Verdict::Pass;
                rec.route = Route::Certificate;
            }
        }
    }
    rec
}

fn records_for(conds: &[Condition], cells: &[Cell], r: f64) -> Vec<ConditionRecord> {
    let mut out: Vec<ConditionRecord> = Vec::with_capacity(conds.len());
    for &c in conds {
        let companion = c.companion().map(|p| {
            out.iter()
                .find(|rec| rec.name == p)
                .cloned()
                .unwrap_or_else(|| build_record(p, cells, r, None))
        });
        out.push(build_record(c, cells, r, companion.as_ref()));
    }
    out
}

pub fn check_p1(estimator: &LocationEstimator, family: &ThetaFamily<'_>, cfg: &RaslConfig) -> Result<ConditionRecord> {
    let cells = simulate(estimator, family, cfg, false)?;
    Ok(build_record(Condition::P1, &cells, cfg.r, None))
}

pub fn check_p2(estimator: &LocationEstimator, family: &ThetaFamily<'_>, cfg: &RaslConfig) -> Result<ConditionRecord> {
    let cells = simulate(estimator, family, cfg, false)?;
    Ok(build_record(Condition::P2, &cells, cfg.r, None))
}

pub fn check_p2a(estimator: &LocationEstimator, family: &ThetaFamily<'_>, cfg: &RaslConfig) -> Result<ConditionRecord> {
    let cells = simulate(estimator, family, cfg, false)?;
    Ok(records_for(&[Condition::P2, Condition::P2a], &cells, cfg.r).pop().expect("two records"))
}

/// Records for P3.1, P3.2 and P3.3, in that order.
pub fn check_p3(estimator: &LocationEstimator, family: &ThetaFamily<'_>, cfg: &RaslConfig) -> Result<Vec<ConditionRecord>> {
    let cells = simulate(estimator, family, cfg, true)?;
    Ok(records_for(&[Condition::P31, Condition::P32, Condition::P33], &cells, cfg.r))
}

/// All conditions from one shared simulation. The P3 conditions are
/// included only when the estimator carries a risk estimate.
pub fn run_rasl(estimator: &LocationEstimator, family: &ThetaFamily<'_>, cfg: &RaslConfig) -> Result<RaslReport> {
    let with_u = estimator.has_risk_estimator();
    let cells = simulate(estimator, family, cfg, with_u)?;
    let conds: &[Condition] = if with_u { &Condition::ALL } else { &Condition::ALL[..3] };
    Ok(RaslReport {
        estimator: estimator.name().to_string(),
        r: cfg.r,
        records: records_for(conds, &cells, cfg.r),
    })
}

/// `Var(||s X - theta||^2) = 2 n s^2 (s^2 + 4 (1-s)^2 a)` for
/// `||theta||^2 = n a`, in the problem's units.
pub fn shrinkage_variance_bound(problem: &PredictiveProblem, s: f64, a: f64) -> Result<f64> {
    if !(s > 0.0 && s <= 1.0) {
        return invalid(format!("shrinkage factor must lie in (0, 1], got {s}"));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return invalid(format!("signal strength must be nonnegative, got {a}"));
    }
    let n = problem.n() as f64;
    let sb = 1.0 - s;
    Ok(problem.sigma_p2().powi(2) * 2.0 * n * s * s * (s * s + 4.0 * sb * sb * a))
}

/// Sample variance of `||s X - theta||^2` with its standard error.
pub fn shrinkage_variance_mc(problem: &PredictiveProblem, s: f64, theta: &ParamPoint, mc_cfg: &McConfig) -> Result<(f64, f64)> {
    problem.check_len(theta.theta(), "theta")?;
    let t = theta.theta();
    let losses = mc::replicate_map(mc_cfg, |_, rng| {
        let x = draw_past(problem, t, rng);
        x.iter().zip(t).map(|(xi, ti)| (s * xi - ti) * (s * xi - ti)).sum::<f64>()
    });
    Ok(variance_se(&losses))
}
