//! Batting-average example: loading, arcsine variance stabilization and the
//! six-strategy loss table.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{CenteredDf, LocationEstimator};
use crate::harmonic::HarmonicPredictive;
use crate::kl::kl_loss_gaussian;
use crate::mc;
use crate::model::{GaussianPredictiveDensity, ParamPoint, PredictiveProblem};
use crate::risk_estimates::{flattening, FlattenSource};

/// The 1970 Efron-Morris batting records (first 45 at-bats and the rest of
/// the season).
pub const BUNDLED_CSV: &str = include_str!("../data/efron_morris_1970.csv");

/// Ratios used for the loss table rows.
pub const TABLE1_R_GRID: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

pub const TABLE1_COLUMNS: [&str; 6] = ["p_E", "p_L", "g_M", "g_JS+", "g_H", "p_H"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BattingRecord {
    pub player: String,
    pub h1: u32,
    pub n1: u32,
    pub h2: u32,
    pub n2: u32,
}

impl BattingRecord {
    fn validate(&self, line: usize) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return invalid(format!("line {line}: at-bats must be at least 1"));
        }
        if self.h1 > self.n1 || self.h2 > self.n2 {
            return invalid(format!("line {line}: hits exceed at-bats for {}", self.player));
        }
        Ok(())
    }
}

/// Parses CSV text with header `player,h1,n1,h2,n2`.
pub fn parse_csv(text: &str) -> Result<Vec<BattingRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let parse_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(1);
        Error::Parse { line, message: e.to_string() }
    };
    let headers = reader.headers().map_err(parse_err)?.clone();
    let expected = ["player", "h1", "n1", "h2", "n2"];
    if headers.iter().ne(expected) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {:?}", expected.join(","), headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<BattingRecord>() {
        let rec = row.map_err(parse_err)?;
        rec.validate(out.len() + 2)?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(out)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<BattingRecord>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

pub fn bundled() -> Vec<BattingRecord> {
    parse_csv(BUNDLED_CSV).expect("bundled data parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedData {
    pub players: Vec<String>,
    pub x: Vec<f64>,
    pub theta0: Vec<f64>,
    pub v_x: f64,
}

/// `arcsin sqrt((h + 1/4) / (n + 1/2))`.
pub fn arcsine_stabilize(h: u32, n: u32) -> f64 {
    ((h as f64 + 0.25) / (n as f64 + 0.5)).sqrt().asin()
}

/// Past counts map to `x`, full-season averages to `theta0`. Every player
/// must have the same number of past at-bats so that the past variance is
/// common.
pub fn transform(records: &[BattingRecord]) -> Result<TransformedData> {
    let Some(first) = records.first() else {
        return invalid("no records to transform");
    };
    if let Some(r) = records.iter().find(|r| r.n1 != first.n1) {
        return invalid(format!("past at-bats differ: {} has {}, {} has {}", first.player, first.n1, r.player, r.n1));
    }
    Ok(TransformedData {
        players: records.iter().map(|r| r.player.clone()).collect(),
        x: records.iter().map(|r| arcsine_stabilize(r.h1, r.n1)).collect(),
        theta0: records
            .iter()
            .map(|r| ((r.h1 + r.h2) as f64 / (r.n1 + r.n2) as f64).sqrt().asin())
            .collect(),
        v_x: 1.0 / (4.0 * first.n1 as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    Origin,
    #[default]
    GrandMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Options {
    pub centering: Centering,
    pub df: CenteredDf,
    /// Monte Carlo draws for the Bayes predictive column.
    pub samples: usize,
    pub seed: u64,
}

impl Default for Table1Options {
    fn default() -> Self {
        Self {
            centering: Centering::GrandMean,
            df: CenteredDf::NMinus2,
            samples: 20_000,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub r: f64,
    /// Losses in [`TABLE1_COLUMNS`] order.
    pub losses: [f64; 6],
    /// Standard error of the Monte Carlo column.
    pub p_h_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub options: Table1Options,
    pub rows: Vec<Table1Row>,
}

impl Table1 {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = TABLE1_COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|row| row.losses[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("r,{},p_H_se\n", TABLE1_COLUMNS.join(","));
        for row in &self.rows {
            let _ = write!(s, "{}", row.r);
            for v in row.losses {
                let _ = write!(s, ",{v:.6}");
            }
            let _ = writeln!(s, ",{:.6}", row.p_h_se);
        }
        s
    }
}

fn location(options: &Table1Options) -> LocationEstimator {
    match options.centering {
        Centering::Origin => LocationEstimator::james_stein_plus(),
        Centering::GrandMean => LocationEstimator::james_stein_plus_centered(options.df),
    }
}

fn table1_row(data: &TransformedData, r: f64, options: &Table1Options, stream: u64) -> Result<Table1Row> {
    if !(r > 0.0 && r.is_finite()) {
        return invalid(format!("variance ratio must be positive, got {r}"));
    }
    // KL is scale invariant, so work in units of the past standard deviation
    let sd = data.v_x.sqrt();
    let x: Vec<f64> = data.x.iter().map(|v| v / sd).collect();
    let theta = ParamPoint::new(data.theta0.iter().map(|v| v / sd).collect())?;
    let problem = PredictiveProblem::normalized(x.len(), r)?;
    let loss = |mean: Vec<f64>, c: f64| kl_loss_gaussian(&problem, &theta, &GaussianPredictiveDensity::single(mean, c)?);

    let js = location(options);
    let js_mean = js.estimate(&problem, &x)?;
    let linear = (1.0 + r) / r;
    let c_js = flattening(&problem, js.risk_estimate(&problem, &x)?, FlattenSource::SurePlus)?.value;
    let h = LocationEstimator::harmonic();
    let c_h = flattening(&problem, h.risk_estimate(&problem, &x)?, FlattenSource::Tweedie)?.value;

    let mut rng = mc::stream_rng(options.seed, stream);
    let (p_h, p_h_se) = HarmonicPredictive::new(&x, r)?.kl_from(theta.theta(), options.samples, &mut rng)?;
    Ok(Table1Row {
        r,
        losses: [
            loss(js_mean.clone(), 1.0)?,
            loss(x.clone(), linear)?,
            loss(js_mean.clone(), linear)?,
            loss(js_mean, c_js)?,
            loss(h.estimate(&problem, &x)?, c_h)?,
            p_h,
        ],
        p_h_se,
    })
}

/// Losses of the six strategies at `theta0`, one row per ratio in `r_grid`.
pub fn table1(data: &TransformedData, r_grid: &[f64], options: Table1Options) -> Result<Table1> {
    if r_grid.is_empty() {
        return invalid("empty ratio grid");
    }
    if options.samples < 2 {
        return invalid("need at least two Monte Carlo samples");
    }
    mc::init_threads();
    let rows = r_grid
        .par_iter()
        .enumerate()
        .map(|(i, &r)| table1_row(data, r, &options, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1 { options, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::make_problem;

    #[test]
    fn bundled_file() {
        let recs = bundled();
        assert_eq!(recs.len(), 18);
        assert!(recs.iter().all(|r| r.n1 == 45));
        let t = transform(&recs).unwrap();
        assert!((t.v_x - 1.0 / 180.0).abs() < 1e-15);
        assert!(t.x.iter().all(|v| *v > 0.0 && *v < std::f64::consts::FRAC_PI_2));
    }

    #[test]
    fn arcsine_examples() {
        assert!((arcsine_stabilize(18, 45) - 0.685_840_508_529_213_7).abs() < 1e-14);
        assert!((arcsine_stabilize(0, 45) - 0.074_192_980_026_236_14).abs() < 1e-14);
    }

    #[test]
    fn bad_inputs() {
        let e = parse_csv("player,h1,n1,h2,n2\nA,50,45,1,2\n").unwrap_err();
        assert!(matches!(e, Error::Validation(m) if m.contains("line 2")));
        assert!(matches!(parse_csv(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv("player,h1,n1,h2,n2\n"), Err(Error::Parse { .. })));
        let e = parse_csv("player,h1,n1,h2,n2\nA,1,45,1,2\nB,x,45,1,2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let recs = parse_csv("player,h1,n1,h2,n2\nA,1,45,1,2\nB,1,40,1,2\n").unwrap();
        assert!(matches!(transform(&recs), Err(Error::Validation(_))));
    }

    #[test]
    fn raw_units_agree() {
        let t = transform(&bundled()).unwrap();
        let r = 0.5;
        let js = LocationEstimator::james_stein_plus_centered(CenteredDf::NMinus2);
        let raw = make_problem(t.x.len(), t.v_x, r * t.v_x).unwrap();
        let c = flattening(&raw, js.risk_estimate(&raw, &t.x).unwrap(), FlattenSource::SurePlus).unwrap().value;
        let g = GaussianPredictiveDensity::single(js.estimate(&raw, &t.x).unwrap(), c).unwrap();
        let direct = kl_loss_gaussian(&raw, &ParamPoint::new(t.theta0.clone()).unwrap(), &g).unwrap();
        let row = table1_row(&t, r, &Table1Options::default(), 0).unwrap();
        assert!((direct - row.losses[3]).abs() < 1e-9);
    }

    #[test]
    fn table_shape_and_ordering() {
        let t = transform(&bundled()).unwrap();
        let tab = table1(&t, &TABLE1_R_GRID, Table1Options { samples: 4000, ..Default::default() }).unwrap();
        assert_eq!(tab.rows.len(), 7);
        let p_l = tab.column("p_L").unwrap();
        assert!((p_l[3] - 5.067).abs() < 0.5, "{p_l:?}");
        for row in &tab.rows {
            let best = row.losses[3];
            assert!(row.losses.iter().all(|v| *v >= best - 1e-12), "{row:?}");
        }
        assert_eq!(tab.to_csv().lines().count(), 8);
    }
}
