use std::sync::Arc;
use std::time::Instant;

use adnav_core::eval::{
    aliased_loop_app, coverage_experiment, escape_threshold, family_episode, first_exit_step, sign_test_p, CoverageSpec,
    CriterionConfig, CriterionPolicy, LoopFamily, RSemSource,
};
use proptest::prelude::*;

#[test]
fn criterion_dominates_baselines_on_aliased_loops() {
    let started = Instant::now();
    let spec = CoverageSpec::default();
    assert_eq!((spec.loop_sizes, spec.seeds, spec.budget), ((3, 10), 100, 60));
    let stats = coverage_experiment(&spec).unwrap();
    let criterion = &stats.policies[0];
    assert_eq!(criterion.policy, "criterion");
    for b in &stats.policies[1..] {
        assert!(criterion.mean > b.mean, "criterion {} vs {} {}", criterion.mean, b.policy, b.mean);
    }
    for c in &stats.comparisons {
        assert!(c.p_value < 0.01, "{c:?}");
    }
    assert!(started.elapsed().as_secs() < 120);
}

/// First step at which `r_loop - lambda * v` drops below `r_exit`, where
/// `v` counts visits to the aliased loop screen, evaluated by stepping.
fn stepped_threshold(r_loop: f64, r_exit: f64, lambda: f64) -> usize {
    let mut v = 0usize;
    while r_loop - lambda * v as f64 >= r_exit {
        v += 1;
    }
    v
}

#[test]
fn loop_escape_matches_closed_form() {
    for lambda in [0.05, 0.1, 0.2] {
        for loop_size in [3, 5, 8] {
            let f = LoopFamily { loop_size, decoys: 0, side_depth: 1, r_loop: 0.9, r_exit: 0.5, r_decoy: 0.1, r_close: 0.0 };
            let bundle = Arc::new(aliased_loop_app(&f).unwrap());
            let cfg = CriterionConfig { lambda, r_sem_source: RSemSource::Scripted, ..CriterionConfig::default() };
            let mut policy = CriterionPolicy::new(cfg, Some(&bundle));
            let report = family_episode(bundle.clone(), &mut policy, 60, 0);
            let measured = first_exit_step(&report, &f.exit_action()).expect("loop is left");
            let closed = escape_threshold(f.r_loop, f.r_exit, lambda);
            assert!(closed.abs_diff(stepped_threshold(0.9, 0.5, lambda)) <= 1);
            assert!(measured.abs_diff(closed) <= 1, "lambda {lambda} n {loop_size}: measured {measured} closed {closed}");
        }
    }
}

#[test]
fn sign_test_matches_binomial_tail() {
    // Sum of C(n, k) / 2^n for k >= wins, computed directly.
    fn tail(w: u32, n: u32) -> f64 {
        let mut c = 1f64;
        let mut s = 0f64;
        for k in 0..=n {
            if k >= w {
                s += c;
            }
            c = c * (n - k) as f64 / (k + 1) as f64;
        }
        s / 2f64.powi(n as i32)
    }
    for n in 1..40u32 {
        for w in 1..=n {
            let p = sign_test_p(w as usize, (n - w) as usize);
            assert!((p - tail(w, n)).abs() < 1e-9, "{w}/{n}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn family_apps_have_one_ad_per_loop_position(n in 2usize..12, d in 0usize..6, depth in 1usize..5) {
        let f = LoopFamily { loop_size: n, decoys: d, side_depth: depth, r_loop: 0.5, r_exit: 0.9, r_decoy: 0.1, r_close: 0.0 };
        let b = aliased_loop_app(&f).unwrap();
        prop_assert_eq!(b.ground_truth_ads().len(), n);
    }
}
