//! Quantized relative entropy over overlapping collections of box events.
//!
//! Events are finite unions of axis-aligned boxes, so every probability
//! reduces to products of one-dimensional Gaussian interval masses. A
//! collection is refined into atoms by cutting each axis at every finite box
//! edge and grouping the resulting grid cells by which events contain them.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::mc;

/// Largest dimension the cut arrangement is built for.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Endpoints may be infinite; boundary points carry no mass and are
    /// ignored.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return invalid(format!("interval needs lo < hi, got [{lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }

    pub fn full() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    fn covers(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    sides: Vec<Interval>,
}

impl BoxSet {
    pub fn new(sides: Vec<Interval>) -> Result<Self> {
        if sides.is_empty() {
            return invalid("a box needs at least one side");
        }
        Ok(Self { sides })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Interval::new(lo, hi)?])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[Interval] {
        &self.sides
    }

    fn covers(&self, other: &BoxSet) -> bool {
        self.sides.iter().zip(&other.sides).all(|(a, b)| a.covers(b))
    }
}

/// A finite union of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    boxes: Vec<BoxSet>,
}

impl Event {
    pub fn new(boxes: Vec<BoxSet>) -> Result<Self> {
        let Some(first) = boxes.first() else {
            return invalid("an event needs at least one box");
        };
        let d = first.dim();
        if boxes.iter().any(|b| b.dim() != d) {
            return invalid("all boxes of an event must share a dimension");
        }
        Ok(Self { boxes })
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn boxes(&self) -> &[BoxSet] {
        &self.boxes
    }

    fn contains_cell(&self, cell: &BoxSet) -> bool {
        self.boxes.iter().any(|b| b.covers(cell))
    }
}

impl From<BoxSet> for Event {
    fn from(b: BoxSet) -> Self {
        Self { boxes: vec![b] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCollection {
    events: Vec<Event>,
}

impl EventCollection {
    pub fn new(events: Vec<Event>) -> Result<Self> {
        let Some(first) = events.first() else {
            return invalid("a collection needs at least one event");
        };
        let d = first.dim();
        if events.iter().any(|e| e.dim() != d) {
            return invalid("all events must share a dimension");
        }
        Ok(Self { events })
    }

    pub fn dim(&self) -> usize {
        self.events[0].dim()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_exhaustive(&self) -> Result<bool> {
        Ok(refine(self)?.uncovered.is_empty())
    }

    /// Appends the complement of the union when the collection does not
    /// cover the space; the flag reports whether anything was added.
    pub fn completed(&self) -> Result<(EventCollection, bool)> {
        let rf = refine(self)?;
        if rf.uncovered.is_empty() {
            return Ok((self.clone(), false));
        }
        let mut events = self.events.clone();
        events.push(Event::new(rf.uncovered)?);
        Ok((EventCollection { events }, true))
    }
}

/// A nonempty cell group of the overlap arrangement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub cells: Vec<BoxSet>,
    /// Indices of the events containing this atom.
    pub members: Vec<usize>,
    pub kappa: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointRefinement {
    pub atoms: Vec<Atom>,
    /// Largest overlap count.
    pub c: usize,
    /// Cells outside every event.
    pub uncovered: Vec<BoxSet>,
}

fn elementary(cuts: &[f64]) -> Vec<Interval> {
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(f64::NEG_INFINITY);
    edges.extend_from_slice(cuts);
    edges.push(f64::INFINITY);
    edges.windows(2).map(|w| Interval { lo: w[0], hi: w[1] }).collect()
}

pub fn refine(collection: &EventCollection) -> Result<DisjointRefinement> {
    let d = collection.dim();
    if d > MAX_DIM {
        return Err(Error::Unsupported(format!("refinement supports dimension <= {MAX_DIM}, got {d}")));
    }
    let axes: Vec<Vec<Interval>> = (0..d)
        .map(|j| {
            let mut cuts: Vec<f64> = collection
                .events
                .iter()
                .flat_map(|e| e.boxes.iter())
                .flat_map(|b| [b.sides[j].lo, b.sides[j].hi])
                .filter(|v| v.is_finite())
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            elementary(&cuts)
        })
        .collect();
    let mut groups: BTreeMap<Vec<usize>, Vec<BoxSet>> = BTreeMap::new();
    let mut uncovered = Vec::new();
    let total: usize = axes.iter().map(Vec::len).product();
    for flat in 0..total {
        let mut rem = flat;
        let mut sides = Vec::with_capacity(d);
        for ax in &axes {
            sides.push(ax[rem % ax.len()]);
            rem /= ax.len();
        }
        let cell = BoxSet { sides };
        let members: Vec<usize> = collection
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.contains_cell(&cell))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            uncovered.push(cell);
        } else {
            groups.entry(members).or_default().push(cell);
        }
    }
    let atoms: Vec<Atom> = groups
        .into_iter()
        .map(|(members, cells)| Atom { kappa: members.len(), members, cells })
        .collect();
    let c = atoms.iter().map(|a| a.kappa).max().unwrap_or(0);
    Ok(DisjointRefinement { atoms, c, uncovered })
}

/// Gaussian with independent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != sd.len() {
            return invalid("mean and sd must be nonempty and of equal length");
        }
        if sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return invalid("sd must be positive and all parameters finite");
        }
        Ok(Self { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `D(self || other)` in closed form.
    pub fn kl(&self, other: &DiagGaussian) -> Result<f64> {
        if self.dim() != other.dim() {
            return invalid("dimension mismatch");
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.sd)
            .zip(other.mean.iter().zip(&other.sd))
            .map(|((m1, s1), (m2, s2))| (s2 / s1).ln() + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5)
            .sum())
    }

    fn interval_mass(&self, j: usize, iv: &Interval) -> f64 {
        let a = (iv.lo - self.mean[j]) / self.sd[j];
        let b = (iv.hi - self.mean[j]) / self.sd[j];
        std_mass(a, b)
    }

    pub fn box_probability(&self, b: &BoxSet) -> f64 {
        b.sides.iter().enumerate().map(|(j, iv)| self.interval_mass(j, iv)).product()
    }

    pub fn event_probability(&self, e: &Event) -> Result<f64> {
        let rf = refine(&EventCollection::new(vec![e.clone()])?)?;
        Ok(rf.atoms.iter().flat_map(|a| a.cells.iter()).map(|c| self.box_probability(c)).sum())
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// `Phi(b) - Phi(a)`, evaluated on the side of zero that avoids
/// cancellation.
fn std_mass(a: f64, b: f64) -> f64 {
    let n = std_normal();
    if a >= 0.0 {
        n.sf(a) - n.sf(b)
    } else if b <= 0.0 {
        n.cdf(b) - n.cdf(a)
    } else {
        1.0 - n.cdf(a) - n.sf(b)
    }
}

/// `(int phi, int z phi, int z^2 phi)` over `(a, b)`.
fn truncated_moments(a: f64, b: f64) -> (f64, f64, f64) {
    let n = std_normal();
    let phi = |z: f64| if z.is_finite() { n.pdf(z) } else { 0.0 };
    let zphi = |z: f64| if z.is_finite() { z * n.pdf(z) } else { 0.0 };
    let m0 = std_mass(a, b);
    (m0, phi(a) - phi(b), m0 - (zphi(b) - zphi(a)))
}

/// `int_box p log(p/q)`.
fn box_divergence(p: &DiagGaussian, q: &DiagGaussian, b: &BoxSet) -> f64 {
    let d = p.dim();
    let masses: Vec<f64> = (0..d).map(|j| p.interval_mass(j, &b.sides[j])).collect();
    let total: f64 = masses.iter().product();
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for j in 0..d {
        let (sp, sq) = (p.sd[j], q.sd[j]);
        let delta = p.mean[j] - q.mean[j];
        let iv = &b.sides[j];
        let (m0, m1, m2) = truncated_moments((iv.lo - p.mean[j]) / sp, (iv.hi - p.mean[j]) / sp);
        if m0 == 0.0 {
            return 0.0;
        }
        // E_p[1_I log(p_j/q_j)] with x - mu_q = sp z + delta
        let e_q2 = sp * sp * m2 + 2.0 * sp * delta * m1 + delta * delta * m0;
        let term = (sq / sp).ln() * m0 - 0.5 * m2 + e_q2 / (2.0 * sq * sq);
        let others: f64 = masses.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, m)| m).product();
        acc += term * others;
    }
    acc
}

fn check_pair(collection: &EventCollection, p: &DiagGaussian, q: &DiagGaussian) -> Result<()> {
    if p.dim() != collection.dim() || q.dim() != collection.dim() {
        return invalid("densities and events differ in dimension");
    }
    Ok(())
}

fn xlogy_ratio(pa: f64, qa: f64) -> f64 {
    if pa <= 0.0 {
        0.0
    } else if qa <= 0.0 {
        f64::INFINITY
    } else {
        pa * (pa / qa).ln()
    }
}

/// `sum_i P(A_i) log(P(A_i)/Q(A_i))`; infinite when some event has
/// `Q = 0 < P`.
pub fn quantized_divergence(collection: &EventCollection, p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    check_pair(collection, p, q)?;
    let rf = refine(collection)?;
    let mut pa = vec![0.0; collection.len()];
    let mut qa = vec![0.0; collection.len()];
    for atom in &rf.atoms {
        let pm: f64 = atom.cells.iter().map(|c| p.box_probability(c)).sum();
        let qm: f64 = atom.cells.iter().map(|c| q.box_probability(c)).sum();
        for &i in &atom.members {
            pa[i] += pm;
            qa[i] += qm;
        }
    }
    Ok(pa.iter().zip(&qa).map(|(a, b)| xlogy_ratio(*a, *b)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettingRecord {
    pub lhs: f64,
    pub c: usize,
    pub kl: f64,
    pub satisfied: bool,
    /// Whether the complement of the union had to be added.
    pub completed: bool,
    /// `D(w.p || w.q) = int w p log(p/q)` with `w = kappa / c`.
    pub weighted_kl: f64,
    /// `log int (1 - w) q`, the upper value claimed for
    /// `D(w.p||w.q) - D(p||q)`.
    pub tilt_stated_rhs: f64,
    /// `m log(Q_w / m)` with `m = int (1 - w) p`, `Q_w = int (1 - w) q`.
    pub tilt_jensen_rhs: f64,
}

impl BettingRecord {
    pub fn tilt_gap(&self) -> f64 {
        self.weighted_kl - self.kl
    }

    pub fn tilt_stated_holds(&self) -> bool {
        self.tilt_gap() <= self.tilt_stated_rhs + 1e-9
    }

    pub fn tilt_jensen_holds(&self) -> bool {
        self.tilt_gap() <= self.tilt_jensen_rhs + 1e-9
    }
}

/// Compares the quantized divergence of the completed collection with
/// `c D(p || q)`.
pub fn check_betting_bound(collection: &EventCollection, p: &DiagGaussian, q: &DiagGaussian) -> Result<BettingRecord> {
    check_pair(collection, p, q)?;
    let (full, completed) = collection.completed()?;
    let rf = refine(&full)?;
    let lhs = quantized_divergence(&full, p, q)?;
    let kl = p.kl(q)?;
    let c = rf.c;
    let mut weighted = 0.0;
    let (mut m, mut qw) = (0.0, 0.0);
    for atom in &rf.atoms {
        let w = atom.kappa as f64 / c as f64;
        for cell in &atom.cells {
            weighted += w * box_divergence(p, q, cell);
            m += (1.0 - w) * p.box_probability(cell);
            qw += (1.0 - w) * q.box_probability(cell);
        }
    }
    let jensen = if m > 0.0 { m * (qw / m).ln() } else { 0.0 };
    Ok(BettingRecord {
        lhs,
        c,
        kl,
        satisfied: lhs <= c as f64 * kl + 1e-9,
        completed,
        weighted_kl: weighted,
        tilt_stated_rhs: qw.ln(),
        tilt_jensen_rhs: jensen,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingCase {
    pub collection: EventCollection,
    pub p: DiagGaussian,
    pub q: DiagGaussian,
}

fn random_interval(rng: &mut ChaCha8Rng) -> Interval {
    let mut a: f64 = rng.random_range(-3.0..3.0);
    let mut b: f64 = rng.random_range(-3.0..3.0);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if b - a < 0.05 {
        b = a + 0.05;
    }
    match rng.random_range(0..6u8) {
        0 => Interval { lo: f64::NEG_INFINITY, hi: b },
        1 => Interval { lo: a, hi: f64::INFINITY },
        _ => Interval { lo: a, hi: b },
    }
}

/// Random box collections in one or two dimensions with random Gaussian
/// pairs.
pub fn random_corpus(count: usize, seed: u64) -> Vec<BettingCase> {
    mc::indexed_map(seed, count, |_, rng| {
        let d = rng.random_range(1..=2usize);
        let k = rng.random_range(1..=4usize);
        let events = (0..k)
            .map(|_| Event::from(BoxSet { sides: (0..d).map(|_| random_interval(rng)).collect() }))
            .collect();
        let gauss = |rng: &mut ChaCha8Rng| DiagGaussian {
            mean: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            sd: (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
        };
        let p = gauss(rng);
        let q = gauss(rng);
        BettingCase {
            collection: EventCollection { events },
            p,
            q,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingCorpusReport {
    pub records: Vec<BettingRecord>,
    pub violations: usize,
    pub tilt_stated_violations: usize,
    pub tilt_jensen_violations: usize,
}

pub fn run_betting_corpus(count: usize, seed: u64) -> Result<BettingCorpusReport> {
    let records = random_corpus(count, seed)
        .iter()
        .map(|case| check_betting_bound(&case.collection, &case.p, &case.q))
        .collect::<Result<Vec<_>>>()?;
    Ok(BettingCorpusReport {
        violations: records.iter().filter(|r| !r.satisfied).count(),
        tilt_stated_violations: records.iter().filter(|r| !r.tilt_stated_holds()).count(),
        tilt_jensen_violations: records.iter().filter(|r| !r.tilt_jensen_holds()).count(),
        records,
    })
}
