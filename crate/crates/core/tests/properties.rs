use std::sync::Arc;

use proptest::prelude::*;

use qcd_core::asymptotics::{
    add_first_order, add_shiryaev, ano_approx, e1_nu_b, estimate_eta, estimate_overshoot, OvershootDistribution,
};
use qcd_core::bellman::{extract_structure, value_iterate, CostParams, SolverSettings};
use qcd_core::model::{kl_divergence, GaussianMeanShift, GeometricPrior};
use qcd_core::montecarlo::{estimate_metrics, run_trial, SimOptions};
use qcd_core::policy::{decide, PolicySpec};
use qcd_core::posterior::{logistic, BeliefState};
use qcd_core::rng::child_rng;

fn gauss(theta: f64) -> GaussianMeanShift {
    GaussianMeanShift::new(theta).unwrap()
}

fn prior(rho: f64) -> GeometricPrior {
    GeometricPrior::new(rho).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lower_threshold_zero_is_shiryaev(
        theta in 0.3f64..2.0,
        rho in 1e-3f64..0.2,
        a in 1.0f64..7.0,
        seed in any::<u64>(),
    ) {
        let (m, p) = (gauss(theta), prior(rho));
        let sh = PolicySpec::shiryaev_log_odds(a).unwrap();
        let g = PolicySpec::two_threshold(logistic(a), 0.0).unwrap();
        let f = PolicySpec::fractional_log_odds(a, 1.0).unwrap();
        let r = run_trial(&sh, &m, &p, seed, 1_000_000).unwrap();
        prop_assert_eq!(run_trial(&g, &m, &p, seed, 1_000_000).unwrap(), r);
        prop_assert_eq!(run_trial(&f, &m, &p, seed, 1_000_000).unwrap(), r);
    }

    #[test]
    fn trial_counters_are_consistent(
        theta in 0.3f64..2.0,
        rho in 1e-3f64..0.2,
        a in 1.0f64..6.0,
        b in -6.0f64..0.9,
        seed in any::<u64>(),
    ) {
        let pol = PolicySpec::two_threshold_log_odds(a, b).unwrap();
        let r = run_trial(&pol, &gauss(theta), &prior(rho), seed, 1_000_000).unwrap();
        prop_assert!(r.tau >= 1);
        prop_assert!(r.obs_before + r.obs_after <= r.tau);
        prop_assert!((0.0..=1.0).contains(&r.one_minus_p_tau));
        prop_assert!(r.one_minus_p_tau < 1.0 - logistic(a) + 1e-12 || r.truncated);
        if r.false_alarm() {
            prop_assert_eq!(r.obs_after, 0);
            prop_assert_eq!(r.delay_plus, 0);
        } else {
            prop_assert_eq!(r.delay_plus, r.tau - r.gamma);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pfa_estimators_agree(theta in 0.5f64..1.5, a in 2.0f64..4.5, b in -3.0f64..1.0) {
        let pol = PolicySpec::two_threshold_log_odds(a, b.min(a - 0.5)).unwrap();
        let m = estimate_metrics(&pol, &gauss(theta), &prior(0.02), 20_000, 3, &SimOptions::default()).unwrap();
        prop_assume!(m.pfa.value >= 1e-3);
        let gap = (m.pfa.value - m.pfa_indicator.value).abs();
        prop_assert!(gap <= 3.0 * m.pfa.se.hypot(m.pfa_indicator.se), "{:?} vs {:?}", m.pfa, m.pfa_indicator);
    }
}

#[test]
fn ano_non_increasing_in_b() {
    let (m, p) = (gauss(0.75), prior(0.01));
    let anos: Vec<f64> = [-4.0, -2.0, -0.85, 0.85, 2.5]
        .iter()
        .map(|&b| {
            let pol = PolicySpec::two_threshold_log_odds(5.0, b).unwrap();
            estimate_metrics(&pol, &m, &p, 20_000, 11, &SimOptions::default()).unwrap().ano.value
        })
        .collect();
    assert!(anos.windows(2).all(|w| w[1] <= w[0]), "{anos:?}");
}

#[test]
fn tabulated_regions_match_extracted_thresholds() {
    let grid = value_iterate(
        &gauss(0.75),
        &prior(0.05),
        CostParams::new(50.0, 0.5).unwrap(),
        SolverSettings {
            grid_size: 2000,
            max_iters: 1500,
            tol: 0.0,
            ..SolverSettings::default()
        },
    )
    .unwrap();
    let s = extract_structure(&grid).unwrap();
    let pair = s.threshold_pair().unwrap();
    let tab = PolicySpec::tabulated(Arc::new(grid));
    let two = PolicySpec::TwoThreshold(pair);
    let mut rng = child_rng(0, 0, 0);
    let mut checked = 0;
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        // Boundaries are resolved to within a grid cell.
        if (p - pair.upper()).abs() < 2e-3 || (p - pair.lower()).abs() < 2e-3 {
            continue;
        }
        let st = BeliefState::from_p(p).unwrap();
        let d_tab = decide(&tab, &st, &mut rng).unwrap();
        let d_two = decide(&two, &st, &mut rng).unwrap();
        assert_eq!(d_tab.stop_now, d_two.stop_now, "stop at p={p}");
        if !d_two.stop_now && p < s.upper_intersection.unwrap() {
            assert_eq!(d_tab.take_next, d_two.take_next, "take at p={p}");
        }
        checked += 1;
    }
    assert!(checked > 900);
}

fn overshoot(theta: f64, rho: f64) -> OvershootDistribution {
    estimate_overshoot(&gauss(theta), &prior(rho), 50_000, None, 5).unwrap()
}

#[test]
fn ano_approximation_decreases_in_b() {
    let (m, p) = (gauss(0.75), prior(0.01));
    let o = overshoot(0.75, 0.01);
    let anos: Vec<f64> = [-4.0, -2.2, -1.0, 0.0, 1.0]
        .iter()
        .map(|&b| ano_approx(b, &m, &p, &o).unwrap().ano)
        .collect();
    assert!(anos.windows(2).all(|w| w[1] < w[0]), "{anos:?}");
}

#[test]
fn first_passage_delay_increases_in_a() {
    let (m, p) = (gauss(0.75), prior(0.01));
    let o = overshoot(0.75, 0.01);
    let eta = estimate_eta(&m, &p, 20_000, None, 5).unwrap();
    let e = eta.mean_at(-2.2).value;
    let vals: Vec<f64> = [3.0, 5.0, 7.0, 9.0]
        .iter()
        .map(|&a| e1_nu_b(a, &m, &p, e, o.r_bar.value))
        .collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
}

#[test]
fn first_order_delay_bounded_by_second_order() {
    let (m, p) = (gauss(1.0), prior(0.05));
    let o = overshoot(1.0, 0.05);
    let eta = estimate_eta(&m, &p, 20_000, None, 5).unwrap().minus_infinity().value;
    let denom = kl_divergence(&m) + p.skip_drift();
    for a in [2.0, 5.0, 10.0, 20.0] {
        let first = add_first_order(a, &m, &p);
        let second = add_shiryaev(a, &m, &p, eta, o.r_bar.value);
        assert!(first <= second + eta.abs() / denom + 1e-12, "a={a}: {first} vs {second}");
    }
}
