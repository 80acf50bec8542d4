use predrisk_core::betting::run_betting_corpus;
use predrisk_core::bounds::{oracle_bound_paper, oracle_bound_xu, theorem2_deviation_bound};
use predrisk_core::kl::{kl_loss_gaussian, kl_loss_generic, quadratic_risk_mc, risk_decomposition_mc, FlattenRule};
use predrisk_core::rasl::{check_p2, radial_family, RaslConfig};
use predrisk_core::risk_estimates::sure_js;
use predrisk_core::{sample_past, Error, GaussianPredictiveDensity, LocationEstimator, McConfig, ParamPoint, PredictiveProblem, DEFAULT_SEED};

fn mc(reps: usize) -> McConfig {
    McConfig::new(reps, DEFAULT_SEED).unwrap()
}

#[test]
fn generic_loss_agrees_with_closed_form() {
    for k in 0..20 {
        let n = 2 + k % 7;
        let r = [0.3, 1.0, 4.0][k % 3];
        let p = PredictiveProblem::normalized(n, r).unwrap();
        let theta: Vec<f64> = (0..n).map(|i| ((k * 31 + i * 7) as f64).sin() * 2.0).collect();
        let mean: Vec<f64> = (0..n).map(|i| theta[i] + ((k * 13 + i) as f64).cos()).collect();
        let c = 0.5 + (k as f64 * 0.77).sin().abs() * 3.0;
        let g = GaussianPredictiveDensity::single(mean, c).unwrap();
        let point = ParamPoint::new(theta).unwrap();
        let exact = kl_loss_gaussian(&p, &point, &g).unwrap();
        let rep = kl_loss_generic(&p, &point, &|y| g.log_density(&p, y), &mc(20_000)).unwrap();
        assert!(rep.within(exact, 3.5), "case {k}: {} +- {} vs {exact}", rep.estimate, rep.std_error);
    }
}

#[test]
fn flattened_risk_sits_inside_its_brackets() {
    for n in [20, 50] {
        for r in [0.5, 1.0, 2.0] {
            let p = PredictiveProblem::normalized(n, r).unwrap();
            let dev = theorem2_deviation_bound(n, r).unwrap();
            for a in [0.0, 1.0, 5.0] {
                let theta = ParamPoint::radial(n, a).unwrap();
                let d = risk_decomposition_mc(&p, &theta, &LocationEstimator::james_stein(), FlattenRule::RiskEstimate, &mc(4000)).unwrap();
                let ex = d.excess();
                let tol = 3.0 * d.excess_se;
                let width = 0.5 * n as f64 * (d.distortion_a + d.distortion_b + d.distortion_l);
                assert!(ex >= -tol, "n={n} r={r} a={a}: excess {ex} below zero");
                assert!(ex <= width + tol, "n={n} r={r} a={a}: excess {ex} above {width}");
                assert!(ex.abs() <= dev + tol, "n={n} r={r} a={a}: |excess| {ex} vs {dev}");
            }
        }
    }
}

#[test]
fn lower_bound_holds_for_every_scale() {
    let p = PredictiveProblem::normalized(30, 1.0).unwrap();
    for a in [0.0, 2.0] {
        let theta = ParamPoint::radial(30, a).unwrap();
        for rule in [FlattenRule::RiskEstimate, FlattenRule::OracleIf, FlattenRule::Fixed(1.0), FlattenRule::Fixed(2.0), FlattenRule::Fixed(5.0)] {
            let d = risk_decomposition_mc(&p, &theta, &LocationEstimator::james_stein(), rule, &mc(4000)).unwrap();
            let slack = 3.0 * (d.risk.std_error + d.lower_bound.std_error);
            assert!(d.lower_bound.estimate <= d.risk.estimate + slack, "{rule:?} a={a}: {} > {}", d.lower_bound.estimate, d.risk.estimate);
        }
    }
}

#[test]
fn positive_part_dominates_plain_shrinkage() {
    for n in [10, 50, 200] {
        let p = PredictiveProblem::normalized(n, 1.0).unwrap();
        for a in [0.0, 0.5, 1.0, 2.0, 5.0] {
            let theta = ParamPoint::radial(n, a).unwrap();
            let js = quadratic_risk_mc(&p, &theta, &LocationEstimator::james_stein(), &mc(4000)).unwrap();
            let jsp = quadratic_risk_mc(&p, &theta, &LocationEstimator::james_stein_plus(), &mc(4000)).unwrap();
            let tol = 3.0 * (js.std_error + jsp.std_error);
            assert!(jsp.estimate <= js.estimate + tol, "n={n} a={a}");
            assert!(js.estimate <= n as f64 + 3.0 * js.std_error, "n={n} a={a}");
        }
    }
}

#[test]
fn unclipped_risk_estimate_is_refused_for_flattening() {
    let p = PredictiveProblem::normalized(10, 1.0).unwrap();
    let err = risk_decomposition_mc(&p, &ParamPoint::zero(10), &LocationEstimator::james_stein_raw_sure(), FlattenRule::RiskEstimate, &mc(2000)).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
}

#[test]
fn unclipped_inverse_flattening_has_a_heavy_tail() {
    // 1 / (1 + u/(n r)) passes through a pole, so its tail decays like 1/t
    // and the running mean never settles.
    let (n, r) = (10, 1.0);
    let p = PredictiveProblem::normalized(n, r).unwrap();
    let theta = ParamPoint::zero(n);
    let vals: Vec<f64> = (0..200_000u64)
        .map(|i| {
            let u = sure_js(&p, &sample_past(&p, &theta, i).unwrap()).unwrap();
            1.0 / (1.0 + u / (n as f64 * r))
        })
        .collect();
    let tail = |t: f64| vals.iter().filter(|v| v.abs() > t).count() as f64 / vals.len() as f64;
    let (t1, t2) = (10.0, 100.0);
    let (p1, p2) = (tail(t1), tail(t2));
    assert!(p2 > 0.0, "no mass beyond {t2}");
    let scaled = (p1 * t1) / (p2 * t2);
    assert!((0.33..3.0).contains(&scaled), "tail {p1} at {t1}, {p2} at {t2}");
}

#[test]
fn bound_crossover() {
    assert!(oracle_bound_paper(0.1).unwrap() < oracle_bound_xu(0.1).unwrap());
    for r in [1.0, 2.0, 5.0] {
        assert!(oracle_bound_paper(r).unwrap() > oracle_bound_xu(r).unwrap(), "r={r}");
    }
}

#[test]
fn violator_grows_faster_than_linear() {
    let cfg = RaslConfig::new(vec![100, 1000, 10_000], 1.0, mc(2000)).unwrap();
    let rec = check_p2(&LocationEstimator::rasl_violator(), &radial_family(0.0), &cfg).unwrap();
    assert!(rec.loglog_slope > 1.05, "slope {}", rec.loglog_slope);
}

#[test]
fn betting_corpus_respects_the_convexity_tilt_bound() {
    let rep = run_betting_corpus(200, DEFAULT_SEED).unwrap();
    assert_eq!(rep.tilt_jensen_violations, 0);
}
