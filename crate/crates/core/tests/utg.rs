use adnav_core::navigator::{adaptive_window, HistoryBuffer};
use adnav_core::app_model::ActionKey;
use adnav_core::utg::{ExportFormat, NodeInfo, TransitionGraph, UtgError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn info(id: &str) -> NodeInfo {
    NodeInfo { id: id.into(), activity: format!("{id}Activity"), structural_metadata: "hierarchy:1w/1c".into() }
}

fn one_node(score: f64) -> TransitionGraph {
    let mut g = TransitionGraph::new(score);
    g.ensure_node(&info("a"));
    g
}

#[test]
fn hand_worked_update() {
    let mut g = one_node(0.05);
    assert_eq!(g.update_score("a", 0.8, 0.3).unwrap(), 0.275);
    assert_eq!(g.score("a"), 0.275);
}

#[test]
fn alpha_zero_keeps_and_alpha_one_replaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let (s, h) = (rng.gen::<f64>(), rng.gen::<f64>());
        let mut g = one_node(s);
        assert_eq!(g.update_score("a", h, 0.0).unwrap(), s);
        assert_eq!(g.update_score("a", h, 1.0).unwrap(), h);
    }
}

#[test]
fn scores_stay_in_unit_interval_over_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100_000 {
        let mut g = one_node(rng.gen());
        let alpha = rng.gen::<f64>();
        for _ in 0..rng.gen_range(1..20) {
            // Mix in the endpoints, where rounding would show first.
            let h = match rng.gen_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen(),
            };
            let s = g.update_score("a", h, alpha).unwrap();
            assert!((0.0..=1.0).contains(&s), "{s}");
        }
    }
}

#[test]
fn out_of_range_inputs_are_rejected() {
    let mut g = one_node(0.1);
    assert!(matches!(g.update_score("a", 1.5, 0.3), Err(UtgError::OutOfRange { .. })));
    assert!(matches!(g.update_score("a", 0.5, -0.1), Err(UtgError::OutOfRange { .. })));
    assert!(matches!(g.update_score("zz", 0.5, 0.3), Err(UtgError::MissingNode(_))));
    assert_eq!(g.score("a"), 0.1);
}

/// Window states with exactly `unique` distinct values in the last
/// `k_base` entries, preceded by unrelated older states.
fn states(k_base: usize, unique: usize) -> Vec<String> {
    let mut out: Vec<String> = (0..7).map(|i| format!("old{i}")).collect();
    out.extend((0..k_base).map(|i| format!("s{}", i % unique)));
    out
}

#[test]
fn window_matches_direct_evaluation_on_the_grid() {
    for k_base in 1..=10usize {
        for unique in 1..=k_base {
            let expected = if unique <= 2 { k_base + k_base.div_ceil(2) } else { k_base };
            assert_eq!(adaptive_window(&states(k_base, unique), k_base), expected, "k_base {k_base} |U| {unique}");
        }
    }
}

#[test]
fn short_history_uses_what_is_there() {
    assert_eq!(adaptive_window(&["a"], 5), 8);
    assert_eq!(adaptive_window::<&str>(&[], 4), 6);
    assert_eq!(adaptive_window(&["a", "b", "c"], 5), 5);
}

#[test]
fn history_buffer_shows_a_longer_tail_in_loops() {
    let mut h = HistoryBuffer::new(4);
    for i in 0..10 {
        h.push("x", if i % 2 == 0 { "y" } else { "x" }, ActionKey::Tap(0), format!("e{i}"), false, i as f64);
    }
    assert_eq!(h.window(), 6);
    assert_eq!(h.recent().len(), 6);
    for i in 0..4 {
        h.push("x", &format!("n{i}"), ActionKey::Tap(1), format!("f{i}"), false, 20.0 + i as f64);
    }
    assert_eq!(h.window(), 4);
}

#[test]
fn neighborhood_respects_hop_bound() {
    let mut g = TransitionGraph::new(0.1);
    for (a, b) in [("a", "b"), ("b", "c"), ("c", "d"), ("a", "c")] {
        g.record_transition(&info(a), &format!("{a}->{b}"), Some(&ActionKey::Tap(0)), &info(b));
    }
    let n1 = g.neighborhood("a", 1).unwrap();
    assert_eq!(n1.ids(), ["a", "b", "c"].iter().map(|s| s.to_string()).collect());
    let n2 = g.neighborhood("a", 2).unwrap();
    assert!(n2.ids().contains("d"));
    assert!(n2.edges.iter().all(|e| e.from != "d"));
}

#[test]
fn json_export_round_trips() {
    let mut g = TransitionGraph::new(0.1);
    g.record_transition(&info("a"), "tap a", Some(&ActionKey::Tap(2)), &info("b"));
    g.update_score("b", 0.9, 0.3).unwrap();
    g.set_summary("b", "leads to an offer").unwrap();
    let back = TransitionGraph::import(&g.export(ExportFormat::Json), ExportFormat::Json).unwrap();
    assert_eq!(back.export(ExportFormat::Json), g.export(ExportFormat::Json));
    assert!(g.export(ExportFormat::Dot).starts_with("digraph"));
}

proptest! {
    #[test]
    fn update_lies_between_old_score_and_estimate(s in 0.0f64..=1.0, h in 0.0f64..=1.0, a in 0.0f64..=1.0) {
        let mut g = one_node(s);
        let v = g.update_score("a", h, a).unwrap();
        prop_assert!(v >= s.min(h) - 1e-15 && v <= s.max(h) + 1e-15);
    }

    #[test]
    fn window_is_base_or_one_and_a_half(k in 1usize..20, seq in prop::collection::vec(0u8..6, 0..40)) {
        let states: Vec<String> = seq.iter().map(|c| c.to_string()).collect();
        let w = adaptive_window(&states, k);
        prop_assert!(w == k || w == (3 * k).div_ceil(2));
    }
}
