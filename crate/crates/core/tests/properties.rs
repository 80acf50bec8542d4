use predrisk_core::betting::{check_betting_bound, quantized_divergence, refine, BoxSet, DiagGaussian, Event, EventCollection, Interval};
use predrisk_core::bounds::{lemma_a3_discrete, lemma_a4_discrete};
use predrisk_core::estimators::{self, CenteredDf};
use predrisk_core::kl::kl_loss_gaussian;
use predrisk_core::risk_estimates::{flattening, sure_js, sure_js_plus, FlattenSource};
use predrisk_core::stats::variance;
use predrisk_core::{make_problem, GaussianPredictiveDensity, McConfig, ParamPoint, PredictiveProblem, Scale};
use proptest::prelude::*;

fn vec_strategy(n: std::ops::Range<usize>, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(move |k| prop::collection::vec(-scale..scale, k))
}

/// Orthogonal map built from two Householder reflections.
fn rotate(u: &[f64], v: &[f64], x: &[f64]) -> Vec<f64> {
    let reflect = |w: &[f64], y: &[f64]| {
        let ww: f64 = w.iter().map(|a| a * a).sum();
        let wy: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
        y.iter().zip(w).map(|(b, a)| b - 2.0 * wy / ww * a).collect::<Vec<_>>()
    };
    reflect(v, &reflect(u, x))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gaussian_loss_is_nonnegative(theta in vec_strategy(1..20, 5.0), shift in -3.0..3.0f64, c in 0.05..20.0f64, r in 0.05..10.0f64) {
        let n = theta.len();
        let p = PredictiveProblem::normalized(n, r).unwrap();
        let mean: Vec<f64> = theta.iter().map(|t| t + shift).collect();
        let l = kl_loss_gaussian(&p, &ParamPoint::new(theta.clone()).unwrap(), &GaussianPredictiveDensity::single(mean, c).unwrap()).unwrap();
        prop_assert!(l >= -1e-12);
        let z = kl_loss_gaussian(&p, &ParamPoint::new(theta.clone()).unwrap(), &GaussianPredictiveDensity::single(theta, 1.0).unwrap()).unwrap();
        prop_assert!(z.abs() < 1e-12);
    }

    #[test]
    fn single_scale_embeds_in_diagonal(theta in vec_strategy(1..10, 4.0), y in vec_strategy(10..11, 6.0), c in 0.1..10.0f64, r in 0.1..5.0f64) {
        let n = theta.len();
        let p = PredictiveProblem::normalized(n, r).unwrap();
        let single = GaussianPredictiveDensity::single(theta.clone(), c).unwrap();
        let diag = GaussianPredictiveDensity::new(theta, Scale::Diagonal(vec![c; n])).unwrap();
        let a = single.log_density(&p, &y[..n]).unwrap();
        let b = diag.log_density(&p, &y[..n]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn raw_and_normalized_losses_agree(x in vec_strategy(4..25, 3.0), t in vec_strategy(25..26, 3.0), v in 0.001..50.0f64, r in 0.1..10.0f64) {
        let n = x.len();
        let theta = &t[..n];
        let raw = make_problem(n, v, r * v).unwrap();
        let unit = PredictiveProblem::normalized(n, r).unwrap();
        let sd = v.sqrt();
        let x_raw: Vec<f64> = x.iter().map(|a| a * sd).collect();
        let t_raw: Vec<f64> = theta.iter().map(|a| a * sd).collect();
        for est in [predrisk_core::LocationEstimator::james_stein_plus(), predrisk_core::LocationEstimator::james_stein_plus_centered(CenteredDf::NMinus2)] {
            let loss = |p: &PredictiveProblem, x: &[f64], t: &[f64]| {
                let c = flattening(p, est.risk_estimate(p, x).unwrap(), FlattenSource::SurePlus).unwrap().value;
                let g = GaussianPredictiveDensity::single(est.estimate(p, x).unwrap(), c).unwrap();
                kl_loss_gaussian(p, &ParamPoint::new(t.to_vec()).unwrap(), &g).unwrap()
            };
            let a = loss(&raw, &x_raw, &t_raw);
            let b = loss(&unit, &x, theta);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn spherical_estimators_commute_with_rotations(x in vec_strategy(3..12, 4.0), u in vec_strategy(12..13, 1.0), w in vec_strategy(12..13, 1.0)) {
        let n = x.len();
        let (u, w) = (&u[..n], &w[..n]);
        prop_assume!(u.iter().map(|a| a * a).sum::<f64>() > 1e-3 && w.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        prop_assume!(x.iter().map(|a| a * a).sum::<f64>() > 1e-3);
        let p = PredictiveProblem::normalized(n, 1.0).unwrap();
        let qx = rotate(u, w, &x);
        for est in [estimators::umvue, estimators::james_stein, estimators::james_stein_plus, estimators::harmonic_posterior_mean] {
            let lhs = est(&p, &qx).unwrap();
            let rhs = rotate(u, w, &est(&p, &x).unwrap());
            prop_assert!(close(&lhs, &rhs, 1e-9), "{lhs:?} vs {rhs:?}");
        }
    }

    #[test]
    fn centered_js_keeps_constant_vectors(m in -5.0..5.0f64, n in 4usize..40) {
        let p = PredictiveProblem::normalized(n, 1.0).unwrap();
        let x = vec![m; n];
        for df in [CenteredDf::NMinus2, CenteredDf::NMinus3] {
            let out = estimators::james_stein_plus_centered(&p, &x, df).unwrap();
            let mean = x.iter().sum::<f64>() / n as f64;
            prop_assert!(out.iter().all(|v| *v == mean));
        }
    }

    #[test]
    fn clipped_sure_is_between_zero_and_n(x in vec_strategy(3..30, 6.0)) {
        prop_assume!(x.iter().any(|v| *v != 0.0));
        let n = x.len();
        let p = PredictiveProblem::normalized(n, 1.0).unwrap();
        let u = sure_js_plus(&p, &x).unwrap();
        prop_assert!((0.0..=n as f64).contains(&u));
        let c = flattening(&p, u, FlattenSource::SurePlus).unwrap().value;
        prop_assert!(c >= 1.0);
    }

    #[test]
    fn clipping_never_adds_variance(seed in 0u64..1000, n in 3usize..40, a in 0.0..4.0f64) {
        let p = PredictiveProblem::normalized(n, 1.0).unwrap();
        let theta = ParamPoint::radial(n, a).unwrap();
        let raw: Vec<f64> = (0..200).map(|i| sure_js(&p, &predrisk_core::sample_past(&p, &theta, seed * 1000 + i).unwrap()).unwrap()).collect();
        let clipped: Vec<f64> = raw.iter().map(|u| u.max(0.0)).collect();
        prop_assert!(variance(&clipped) <= variance(&raw) + 1e-9);
    }

    #[test]
    fn appendix_inequalities_on_discrete_laws(atoms in prop::collection::vec(0.0..50.0f64, 2..7), wts in prop::collection::vec(0.01..1.0f64, 7), signed in prop::collection::vec(-20.0..20.0f64, 2..7)) {
        let w = &wts[..atoms.len()];
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        prop_assert!(lemma_a3_discrete(&atoms, &w).unwrap().holds_corrected());
        let ws = &wts[..signed.len()];
        let total: f64 = ws.iter().sum();
        let ws: Vec<f64> = ws.iter().map(|v| v / total).collect();
        prop_assert!(lemma_a4_discrete(&signed, &ws).unwrap().holds());
    }
}

fn interval_strategy() -> impl Strategy<Value = Interval> {
    (-3.0..3.0f64, 0.05..4.0f64, 0u8..6).prop_map(|(a, w, kind)| match kind {
        0 => Interval::new(f64::NEG_INFINITY, a).unwrap(),
        1 => Interval::new(a, f64::INFINITY).unwrap(),
        _ => Interval::new(a, a + w).unwrap(),
    })
}

fn collection_strategy() -> impl Strategy<Value = EventCollection> {
    (1usize..=2).prop_flat_map(|d| {
        prop::collection::vec(prop::collection::vec(interval_strategy(), d), 1..5)
            .prop_map(|boxes| EventCollection::new(boxes.into_iter().map(|b| Event::from(BoxSet::new(b).unwrap())).collect()).unwrap())
    })
}

fn gaussian(d: usize, m: &[f64], s: &[f64]) -> DiagGaussian {
    DiagGaussian::new(m[..d].to_vec(), s[..d].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn refinement_is_a_partition(coll in collection_strategy(), m in prop::collection::vec(-1.0..1.0f64, 2), s in prop::collection::vec(0.5..2.0f64, 2)) {
        let d = coll.dim();
        let p = gaussian(d, &m, &s);
        let rf = refine(&coll).unwrap();
        prop_assert!(rf.atoms.iter().all(|a| a.kappa >= 1 && a.kappa <= coll.len()));
        prop_assert_eq!(rf.c, rf.atoms.iter().map(|a| a.kappa).max().unwrap());
        let atoms: f64 = rf.atoms.iter().flat_map(|a| &a.cells).map(|c| p.box_probability(c)).sum();
        let rest: f64 = rf.uncovered.iter().map(|c| p.box_probability(c)).sum();
        prop_assert!((atoms + rest - 1.0).abs() < 1e-12);
        // each event's mass equals the mass of the atoms it contains
        for (i, e) in coll.events().iter().enumerate() {
            let direct = p.event_probability(e).unwrap();
            let via: f64 = rf.atoms.iter().filter(|a| a.members.contains(&i)).flat_map(|a| &a.cells).map(|c| p.box_probability(c)).sum();
            prop_assert!((direct - via).abs() < 1e-12);
        }
    }

    #[test]
    fn partitions_never_exceed_kl(coll in collection_strategy(), m in prop::collection::vec(-1.0..1.0f64, 4), s in prop::collection::vec(0.5..2.0f64, 4)) {
        let d = coll.dim();
        let p = gaussian(d, &m[..2], &s[..2]);
        let q = gaussian(d, &m[2..], &s[2..]);
        let (full, _) = coll.completed().unwrap();
        let rf = refine(&full).unwrap();
        // the atoms themselves form a partition, so data processing applies
        let atom_events = EventCollection::new(rf.atoms.iter().map(|a| Event::new(a.cells.clone()).unwrap()).collect()).unwrap();
        let part = quantized_divergence(&atom_events, &p, &q).unwrap();
        let kl = p.kl(&q).unwrap();
        prop_assert!(part >= -1e-12 && part <= kl + 1e-9, "{part} vs {kl}");
        let rec = check_betting_bound(&coll, &p, &q).unwrap();
        prop_assert!(rec.tilt_jensen_holds(), "{rec:?}");
        if rf.c == 1 {
            prop_assert!(rec.satisfied);
        }
    }
}

#[test]
fn monte_carlo_is_reproducible() {
    let p = PredictiveProblem::normalized(30, 1.0).unwrap();
    let theta = ParamPoint::radial(30, 1.0).unwrap();
    let m = McConfig::new(500, 42).unwrap();
    let est = predrisk_core::LocationEstimator::james_stein();
    let a = predrisk_core::kl::quadratic_risk_mc(&p, &theta, &est, &m).unwrap();
    let b = predrisk_core::kl::quadratic_risk_mc(&p, &theta, &est, &m).unwrap();
    assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
}
