use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use predrisk_core::betting::run_betting_corpus;
use predrisk_core::bounds;
use predrisk_core::data::{self, Centering, Table1Options};
use predrisk_core::estimators::CenteredDf;
use predrisk_core::kl::{risk_decomposition_mc, FlattenRule};
use predrisk_core::rasl::{radial_family, run_rasl, RaslConfig};
use predrisk_core::sparse::{rate_f, sparse_minimax_estimate, SparseSpace};
use predrisk_core::{LocationEstimator, McConfig, ParamPoint, PredictiveProblem, DEFAULT_SEED};

use crate::config::{load_config, parse_list, Resolver};
use crate::output::{emit, sha256_hex, Manifest};
use crate::{Common, UsageError};

fn setup(common: &Common) -> Result<(Resolver, u64)> {
    let cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => Default::default(),
    };
    let mut res = Resolver::new(cfg);
    let seed = res.get("seed", common.seed, Some(DEFAULT_SEED))?;
    Ok((res, seed))
}

fn estimator(name: &str) -> Result<LocationEstimator, UsageError> {
    LocationEstimator::by_name(name).ok_or_else(|| {
        UsageError(format!("unknown estimator {name:?}; expected one of umvue, js, js-raw, js+, harmonic, violator"))
    })
}

fn parse_theta(spec: &str, n: usize) -> Result<ParamPoint> {
    let bad = || UsageError(format!("bad theta spec {spec:?}; expected zero, spike:h,k, radial:a or file:path"));
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "zero" if rest.is_empty() => ParamPoint::zero(n),
        "spike" => {
            let (h, k) = rest.split_once(',').ok_or_else(bad)?;
            let h: f64 = h.trim().parse().map_err(|_| bad())?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            ParamPoint::spikes(n, h, k)?
        }
        "radial" => ParamPoint::radial(n, rest.trim().parse().map_err(|_| bad())?)?,
        "file" => {
            let text = std::fs::read_to_string(rest)?;
            let theta = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| UsageError(format!("bad number {t:?} in {rest}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if theta.len() != n {
                return Err(UsageError(format!("{rest} holds {} values, expected {n}", theta.len())).into());
            }
            ParamPoint::new(theta)?
        }
        _ => return Err(bad().into()),
    })
}

fn parse_scale(spec: &str) -> Result<FlattenRule, UsageError> {
    match spec {
        "sure+" => Ok(FlattenRule::RiskEstimate),
        "oracle" => Ok(FlattenRule::OracleIf),
        _ => spec
            .strip_prefix("fixed:")
            .and_then(|c| c.parse().ok())
            .map(FlattenRule::Fixed)
            .ok_or_else(|| UsageError(format!("bad scale {spec:?}; expected fixed:c, sure+ or oracle"))),
    }
}

#[derive(Args, Debug)]
pub struct RiskArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Future-to-past variance ratio.
    #[arg(long)]
    r: Option<f64>,
    /// zero | spike:h,k | radial:a | file:path
    #[arg(long)]
    theta_spec: Option<String>,
    #[arg(long)]
    estimator: Option<String>,
    /// fixed:c | sure+ | oracle
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    common: Common,
}

pub fn risk(a: RiskArgs) -> Result<()> {
    let started = Instant::now();
    let (mut res, seed) = setup(&a.common)?;
    let n: usize = res.get("n", a.n, None)?;
    let r: f64 = res.get("r", a.r, Some(1.0))?;
    let theta_spec: String = res.get("theta-spec", a.theta_spec, Some("zero".into()))?;
    let est_name: String = res.get("estimator", a.estimator, Some("js".into()))?;
    let scale_spec: String = res.get("scale", a.scale, Some("sure+".into()))?;
    let reps: usize = res.get("replicates", a.replicates, Some(10_000))?;
    res.finish()?;

    let est = estimator(&est_name)?;
    let rule = parse_scale(&scale_spec)?;
    let problem = PredictiveProblem::normalized(n, r)?;
    let theta = parse_theta(&theta_spec, n)?;
    let d = risk_decomposition_mc(&problem, &theta, &est, rule, &McConfig::new(reps, seed)?)?;

    let mut body = String::from(
        "estimator,n,r,risk,se,replicates,quadratic_risk,quadratic_se,log_if,lower_bracket,upper_bracket,mean_flattening,ideal_flattening,lower_bound\n",
    );
    writeln!(
        body,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        est.name(),
        n,
        r,
        d.risk.estimate,
        d.risk.std_error,
        d.risk.replicates,
        d.quadratic_risk.estimate,
        d.quadratic_risk.std_error,
        d.log_if_term,
        d.lower_bracket(),
        d.upper_bracket(),
        d.mean_flattening,
        d.ideal_flattening,
        d.lower_bound.estimate,
    )?;
    let manifest = Manifest { subcommand: "risk", config: res.resolved, seed, data_sha256: None };
    emit(a.common.out.as_deref(), &manifest, &body, started)
}

#[derive(Args, Debug)]
pub struct RaslArgs {
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    /// Signal strength of the radial family, `||theta_n||^2 = n a`.
    #[arg(long)]
    a: Option<f64>,
    /// Comma-separated dimensions.
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    common: Common,
}

pub fn rasl(a: RaslArgs) -> Result<()> {
    let started = Instant::now();
    let (mut res, seed) = setup(&a.common)?;
    let est_name: String = res.get("estimator", a.estimator, Some("js".into()))?;
    let r: f64 = res.get("r", a.r, Some(1.0))?;
    let sig: f64 = res.get("a", a.a, Some(1.0))?;
    let grid: String = res.get("n-grid", a.n_grid, Some("10,30,100,300,1000".into()))?;
    let reps: usize = res.get("replicates", a.replicates, Some(2000))?;
    res.finish()?;

    let est = estimator(&est_name)?;
    let cfg = RaslConfig::new(parse_list(&grid)?, r, McConfig::new(reps, seed)?)?;
    let report = run_rasl(&est, &radial_family(sig), &cfg)?;
    for rec in &report.records {
        eprintln!("{:<4} slope {:>8.4} +- {:<8.4} threshold {:<5} {:?}", rec.name, rec.loglog_slope, rec.slope_halfwidth, rec.threshold, rec.verdict);
    }
    let manifest = Manifest { subcommand: "rasl", config: res.resolved, seed, data_sha256: None };
    emit(a.common.out.as_deref(), &manifest, &report.to_csv(), started)
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long)]
    r: Option<f64>,
    /// Comma-separated dimensions for the constants table (each >= 10).
    #[arg(long)]
    n_grid: Option<String>,
    #[command(flatten)]
    common: Common,
}

pub fn bounds(a: BoundsArgs) -> Result<()> {
    let started = Instant::now();
    let (mut res, seed) = setup(&a.common)?;
    let r: f64 = res.get("r", a.r, Some(0.1))?;
    let grid: String = res.get("n-grid", a.n_grid, Some("10,20,50,100,1000,10000".into()))?;
    res.finish()?;

    let mut body = String::from("quantity,n,value\n");
    let envelope = bounds::dimension_free_envelope(r)?;
    let xu = bounds::oracle_bound_xu(r)?;
    writeln!(body, "envelope,,{envelope}")?;
    writeln!(body, "oracle_bound,,{}", bounds::oracle_bound_paper(r)?)?;
    writeln!(body, "oracle_bound_xu,,{xu}")?;
    writeln!(body, "suboptimality_factor,,{}", bounds::suboptimality_factor(r)?)?;
    for n in parse_list::<usize>(&grid)? {
        let c = bounds::constants(n)?;
        for (name, v) in [
            ("a_n", c.a_n),
            ("b_n", c.b_n),
            ("l_n", c.l_n),
            ("e_n", c.e_n),
            ("f_n", c.f_n),
            ("k1", c.k1),
            ("k2", c.k2),
            ("k3", c.k3),
            ("deviation_bound", bounds::theorem2_deviation_bound(n, r)?),
            ("approximation_bound", bounds::theorem2_approximation_bound(n, r)?),
        ] {
            writeln!(body, "{name},{n},{v}")?;
        }
    }
    eprintln!("r = {r}: envelope {envelope:.1} vs earlier oracle bound {xu:.1}");
    let manifest = Manifest { subcommand: "bounds", config: res.resolved, seed, data_sha256: None };
    emit(a.common.out.as_deref(), &manifest, &body, started)
}

#[derive(Args, Debug)]
pub struct Table1Args {
    /// CSV with header player,h1,n1,h2,n2; the bundled 1970 data if omitted.
    #[arg(long)]
    data: Option<String>,
    /// origin | grand-mean
    #[arg(long)]
    centering: Option<String>,
    /// n-2 | n-3 (grand-mean centering only)
    #[arg(long)]
    df: Option<String>,
    #[arg(long)]
    r_grid: Option<String>,
    /// Monte Carlo draws for the Bayes predictive column.
    #[arg(long)]
    samples: Option<usize>,
    #[command(flatten)]
    common: Common,
}

pub fn table1(a: Table1Args) -> Result<()> {
    let started = Instant::now();
    let (mut res, seed) = setup(&a.common)?;
    let path: String = res.get("data", a.data, Some("bundled".into()))?;
    let centering: String = res.get("centering", a.centering, Some("grand-mean".into()))?;
    let df: String = res.get("df", a.df, Some("n-2".into()))?;
    let default_grid = data::TABLE1_R_GRID.map(|r| r.to_string()).join(",");
    let grid: String = res.get("r-grid", a.r_grid, Some(default_grid))?;
    let samples: usize = res.get("samples", a.samples, Some(20_000))?;
    res.finish()?;

    let centering = match centering.as_str() {
        "origin" => Centering::Origin,
        "grand-mean" => Centering::GrandMean,
        _ => return Err(UsageError(format!("bad centering {centering:?}; expected origin or grand-mean")).into()),
    };
    let df = match df.as_str() {
        "n-2" => CenteredDf::NMinus2,
        "n-3" => CenteredDf::NMinus3,
        _ => return Err(UsageError(format!("bad df {df:?}; expected n-2 or n-3")).into()),
    };
    let text = if path == "bundled" {
        data::BUNDLED_CSV.to_string()
    } else {
        std::fs::read_to_string(&path).map_err(predrisk_core::Error::from)?
    };
    let records = data::parse_csv(&text)?;
    let transformed = data::transform(&records)?;
    let table = data::table1(&transformed, &parse_list(&grid)?, Table1Options { centering, df, samples, seed })?;
    let manifest = Manifest {
        subcommand: "table1",
        config: res.resolved,
        seed,
        data_sha256: Some(sha256_hex(text.as_bytes())),
    };
    emit(a.common.out.as_deref(), &manifest, &table.to_csv(), started)
}

#[derive(Args, Debug)]
pub struct SparseArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated sparsity levels.
    #[arg(long)]
    s_grid: Option<String>,
    #[arg(long)]
    r_grid: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    common: Common,
}

pub fn sparse(a: SparseArgs) -> Result<()> {
    let started = Instant::now();
    let (mut res, seed) = setup(&a.common)?;
    let n: usize = res.get("n", a.n, Some(10_000))?;
    let s_grid: String = res.get("s-grid", a.s_grid, Some("10,50".into()))?;
    let r_grid: String = res.get("r-grid", a.r_grid, Some("0.5,1,2".into()))?;
    let reps: usize = res.get("replicates", a.replicates, Some(200))?;
    res.finish()?;

    let mut body = String::from(
        "n,s,r,eta,f_eta,gaussian_rate,unrestricted_rate,ratio,empirical,empirical_se,empirical_exact,empirical_ratio\n",
    );
    for s in parse_list::<usize>(&s_grid)? {
        for r in parse_list::<f64>(&r_grid)? {
            let problem = PredictiveProblem::normalized(n, r)?;
            let rec = sparse_minimax_estimate(&problem, SparseSpace::new(n, s)?, &McConfig::new(reps, seed)?)?;
            writeln!(
                body,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.n,
                rec.s,
                rec.r,
                rec.eta,
                rate_f(rec.eta, r)?,
                rec.gaussian_rate,
                rec.unrestricted_rate,
                rec.ratio,
                rec.empirical,
                rec.empirical_se,
                rec.empirical_exact,
                rec.empirical_ratio(),
            )?;
        }
    }
    let manifest = Manifest { subcommand: "sparse", config: res.resolved, seed, data_sha256: None };
    emit(a.common.out.as_deref(), &manifest, &body, started)
}

#[derive(Args, Debug)]
pub struct BettingArgs {
    /// Number of random collections.
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    common: Common,
}

pub fn betting(a: BettingArgs) -> Result<()> {
    let started = Instant::now();
    let (mut res, seed) = setup(&a.common)?;
    let count: usize = res.get("count", a.count, Some(200))?;
    res.finish()?;

    let report = run_betting_corpus(count, seed)?;
    let mut body = String::from("entry,c,completed,lhs,kl,bound,satisfied,tilt_gap,tilt_stated_rhs,tilt_jensen_rhs\n");
    for (i, rec) in report.records.iter().enumerate() {
        writeln!(
            body,
            "{i},{},{},{},{},{},{},{},{},{}",
            rec.c,
            rec.completed,
            rec.lhs,
            rec.kl,
            rec.c as f64 * rec.kl,
            rec.satisfied,
            rec.tilt_gap(),
            rec.tilt_stated_rhs,
            rec.tilt_jensen_rhs,
        )?;
    }
    eprintln!("bound violations: {} of {count}", report.violations);
    let manifest = Manifest { subcommand: "betting", config: res.resolved, seed, data_sha256: None };
    emit(a.common.out.as_deref(), &manifest, &body, started)
}
