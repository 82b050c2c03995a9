use adnav_core::app_model::ActionKey;
use adnav_core::prober::{correlate, synthetic_trace, AdTraffic, NetworkPrior, ProbeEvent};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

/// All-pairs reference: the cause of a request is the latest event at or
/// before it, and only if it lags by less than delta.
fn brute_force(events: &[ProbeEvent], traffic: &[AdTraffic], delta: f64) -> Vec<Option<usize>> {
    traffic
        .iter()
        .map(|t| {
            let mut best: Option<usize> = None;
            for (i, e) in events.iter().enumerate() {
                if e.timestamp <= t.timestamp && best.is_none_or(|b| events[b].timestamp <= e.timestamp) {
                    best = Some(i);
                }
            }
            best.filter(|&i| t.timestamp - events[i].timestamp < delta)
        })
        .collect()
}

fn as_assignment(prior: &NetworkPrior, traffic: &[AdTraffic]) -> Vec<Option<usize>> {
    let mut out = vec![None; traffic.len()];
    let mut links = prior.links.iter().peekable();
    for (k, t) in traffic.iter().enumerate() {
        if let Some(l) = links.peek() {
            if l.url == t.url && l.timestamp == t.timestamp {
                out[k] = Some(l.event_index);
                links.next();
            }
        }
    }
    out
}

fn random_trace(seed: u64) -> (Vec<ProbeEvent>, Vec<AdTraffic>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..40);
    let mut t = 0.0;
    let mut events = Vec::new();
    for i in 0..n {
        // Occasional zero gaps exercise ties.
        t += if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..8.0) };
        events.push(ProbeEvent { timestamp: (t * 4.0_f64).round() / 4.0, state_fingerprint: format!("s{i}"), action: ActionKey::Tap(i) });
    }
    let m = rng.gen_range(0..40);
    let mut traffic: Vec<AdTraffic> = (0..m)
        .map(|k| AdTraffic { url: format!("https://ads.example/{k}"), timestamp: (rng.gen_range(-2.0..t + 8.0) * 4.0_f64).round() / 4.0 })
        .collect();
    traffic.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    (events, traffic)
}

#[test]
fn synthetic_traces_are_recovered_exactly_at_five_seconds() {
    for seed in 0..20 {
        let s = synthetic_trace(300, 120, 0.4, 60, seed);
        let got = as_assignment(&correlate(&s.events, &s.traffic, 5.0), &s.traffic);
        let tp = got.iter().zip(&s.truth).filter(|(g, t)| g.is_some() && g == t).count();
        let predicted = got.iter().filter(|g| g.is_some()).count();
        let actual = s.truth.iter().filter(|t| t.is_some()).count();
        assert_eq!(tp, predicted, "precision below 1 for seed {seed}");
        assert_eq!(tp, actual, "recall below 1 for seed {seed}");
    }
}

#[test]
fn sweep_equals_brute_force_on_random_traces() {
    for seed in 0..1000 {
        let (events, traffic) = random_trace(seed);
        for delta in [0.5, 3.0, 5.0] {
            let got = as_assignment(&correlate(&events, &traffic, delta), &traffic);
            assert_eq!(got, brute_force(&events, &traffic, delta), "seed {seed} delta {delta}");
        }
    }
}

#[test]
fn late_lag_fraction_is_recovered() {
    let s = synthetic_trace(2000, 1000, 0.4, 200, 11);
    let prior = correlate(&s.events, &s.traffic, 5.0);
    let late = prior.links.iter().filter(|l| (3.0..5.0).contains(&l.lag_seconds)).count();
    let frac = late as f64 / prior.links.len() as f64;
    assert!((frac - 0.4).abs() <= 0.02, "late fraction {frac}");
}

#[test]
fn narrower_window_drops_late_requests() {
    let s = synthetic_trace(500, 200, 0.4, 0, 3);
    let prior = correlate(&s.events, &s.traffic, 3.0);
    assert!(prior.links.iter().all(|l| l.lag_seconds < 3.0));
    assert_eq!(prior.unlinked.len(), 80);
}

#[test]
fn probe_links_station_tap_to_its_ad_request() {
    let b = common::bundle("radio_stream");
    let (_, trace, prior) = adnav_core::prober::probe_bundle(b, &Default::default(), common::PROBE_SEED);
    assert!(!trace.events.is_empty());
    for l in &prior.links {
        assert!(l.lag_seconds >= 0.0 && l.lag_seconds < 5.0);
        assert!(l.timestamp >= trace.events[l.event_index].timestamp);
    }
}

proptest! {
    #[test]
    fn links_and_unlinked_partition_traffic(seed in any::<u64>(), delta in 0.1f64..10.0) {
        let (events, traffic) = random_trace(seed);
        let p = correlate(&events, &traffic, delta);
        prop_assert_eq!(p.links.len() + p.unlinked.len(), traffic.len());
        for l in &p.links {
            prop_assert!(l.lag_seconds >= 0.0 && l.lag_seconds < delta);
        }
    }
}
