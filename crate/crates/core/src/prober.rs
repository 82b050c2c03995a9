//! Lightweight random exploration that yields a coarse transition graph and
//! a network prior linking interactions to the ad traffic that follows.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::app_model::{ActionKey, AppBundle, LogRecord, Session, SessionConfig};
use crate::perception::{restart_descriptor, Perception, PerceptionConfig};
use crate::utg::{NodeInfo, TransitionGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub budget_steps: usize,
    pub delta_seconds: f64,
    pub ad_domains: Vec<String>,
    pub keywords: Vec<String>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            budget_steps: 50,
            delta_seconds: 5.0,
            ad_domains: strings(&[
                "googleads.g.doubleclick.net",
                "doubleclick.net",
                "googlesyndication.com",
                "googleadservices.com",
                "applovin.com",
                "unityads.unity3d.com",
                "an.facebook.com",
                "ads.mopub.com",
                "adcolony.com",
                "vungle.com",
                "supersonicads.com",
            ]),
            keywords: strings(&["/ads", "adunit", "ad_unit", "adrequest", "/mads/", "interstitial", "rewarded"]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvent {
    pub timestamp: f64,
    pub state_fingerprint: String,
    pub action: ActionKey,
}

/// Interaction events and the system log of one probe run, both sorted by
/// timestamp.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub events: Vec<ProbeEvent>,
    pub syslog: Vec<LogRecord>,
}

/// Random walk over the normalized actionable set, restarting the app when
/// it crashes or leaves the foreground.
pub fn random_probe(bundle: Arc<AppBundle>, budget_steps: usize, seed: u64) -> (TransitionGraph, ProbeTrace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perception = Perception::new(PerceptionConfig::default(), None);
    let (mut session, mut state) = Session::reset(bundle, seed, SessionConfig::default());
    let mut graph = TransitionGraph::default();
    graph.ensure_node(&NodeInfo::from(&state));
    let mut trace = ProbeTrace::default();

    for _ in 0..budget_steps {
        let needs_restart = session.is_crashed() || session.is_backgrounded();
        let (action, event) = if needs_restart {
            (ActionKey::Restart, restart_descriptor())
        } else {
            let obs = perception.perceive(&state);
            let element = obs.elements.choose(&mut rng).expect("back is always actionable");
            (element.action_key.clone(), element.event_descriptor(&state.state_fingerprint))
        };
        trace.events.push(ProbeEvent {
            timestamp: session.clock(),
            state_fingerprint: state.state_fingerprint.clone(),
            action: action.clone(),
        });
        let outcome = session.step(&action);
        graph.record_transition(&NodeInfo::from(&state), &event, Some(&action), &NodeInfo::from(&outcome.next));
        state = outcome.next;
    }
    trace.syslog = session.emission_log().to_vec();
    (graph, trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdTraffic {
    pub url: String,
    pub timestamp: f64,
}

fn host_matches(host: &str, domain: &str) -> bool {
    host == domain || host.strip_suffix(domain).is_some_and(|p| p.ends_with('.'))
}

/// URLs in log messages whose host is a known ad domain or whose text
/// contains an ad keyword.
pub fn extract_ad_traffic(syslog: &[LogRecord], ad_domains: &[String], keywords: &[String]) -> Vec<AdTraffic> {
    let mut out = Vec::new();
    for record in syslog {
        for token in record.message.split(|c: char| c.is_whitespace() || c == '"' || c == '\'') {
            if !(token.starts_with("http://") || token.starts_with("https://")) {
                continue;
            }
            let Ok(url) = url::Url::parse(token) else { continue };
            let host = url.host_str().unwrap_or("").to_ascii_lowercase();
            let lower = token.to_ascii_lowercase();
            let domain_hit = ad_domains.iter().any(|d| host_matches(&host, &d.to_ascii_lowercase()));
            let keyword_hit = keywords.iter().any(|k| lower.contains(&k.to_ascii_lowercase()));
            if domain_hit || keyword_hit {
                out.push(AdTraffic { url: token.to_string(), timestamp: record.timestamp });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkLink {
    /// Index into the probe's event list.
    pub event_index: usize,
    pub state_fingerprint: String,
    pub action: ActionKey,
    pub url: String,
    pub timestamp: f64,
    pub lag_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkPrior {
    pub links: Vec<NetworkLink>,
    pub unlinked: Vec<AdTraffic>,
    pub window_delta_seconds: f64,
}

impl NetworkPrior {
    pub fn is_empty(&self) -> bool {
        self.links.is_empty() && self.unlinked.is_empty()
    }
}

fn link(events: &[ProbeEvent], i: usize, t: &AdTraffic) -> NetworkLink {
    let e = &events[i];
    NetworkLink {
        event_index: i,
        state_fingerprint: e.state_fingerprint.clone(),
        action: e.action.clone(),
        url: t.url.clone(),
        timestamp: t.timestamp,
        lag_seconds: t.timestamp - e.timestamp,
    }
}

/// Links each traffic item to the latest event at or before it, provided
/// the lag is strictly below `delta_seconds`. Single forward sweep.
pub fn correlate(events: &[ProbeEvent], traffic: &[AdTraffic], delta_seconds: f64) -> NetworkPrior {
    let mut prior = NetworkPrior { window_delta_seconds: delta_seconds, ..Default::default() };
    let mut j = 0usize;
    for t in traffic {
        while j < events.len() && events[j].timestamp <= t.timestamp {
            j += 1;
        }
        match j.checked_sub(1) {
            Some(i) if t.timestamp - events[i].timestamp < delta_seconds => prior.links.push(link(events, i, t)),
            _ => prior.unlinked.push(t.clone()),
        }
    }
    prior
}

/// Synthetic interaction/traffic trace with known alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTrace {
    pub events: Vec<ProbeEvent>,
    pub traffic: Vec<AdTraffic>,
    /// Per traffic item, the index of the event that caused it.
    pub truth: Vec<Option<usize>>,
}

/// Events spaced 6 to 9 s apart; `n_linked` of them cause one request
/// after a lag, a fraction `late_fraction` of which land in [3, 5) s and
/// the rest in [0, 3) s. Unrelated background requests are placed at
/// least 5 s after the preceding event.
pub fn synthetic_trace(n_events: usize, n_linked: usize, late_fraction: f64, n_background: usize, seed: u64) -> SyntheticTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(n_events);
    let mut t = 1.0;
    for i in 0..n_events {
        events.push(ProbeEvent { timestamp: t, state_fingerprint: format!("s{:04}", i % 97), action: ActionKey::Tap(i % 7) });
        t += rng.gen_range(6.0..9.0);
    }
    let mut idx: Vec<usize> = (0..n_events).collect();
    idx.shuffle(&mut rng);
    let linked: Vec<usize> = idx.iter().copied().take(n_linked.min(n_events)).collect();
    let n_late = (late_fraction * linked.len() as f64).round() as usize;
    let mut items: Vec<(AdTraffic, Option<usize>)> = Vec::new();
    for (k, &e) in linked.iter().enumerate() {
        let lag = if k < n_late { rng.gen_range(3.0..5.0) } else { rng.gen_range(0.0..3.0) };
        let ts = events[e].timestamp + lag;
        items.push((AdTraffic { url: format!("https://googleads.g.doubleclick.net/mads/gma?req={k}"), timestamp: ts }, Some(e)));
    }
    for k in 0..n_background {
        let e = rng.gen_range(0..n_events.max(1));
        let base = events.get(e).map_or(0.0, |ev| ev.timestamp);
        let gap = events.get(e + 1).map_or(6.0, |n| n.timestamp - base);
        // Between 5 s after the event and the next event: never linkable.
        let ts = base + 5.0 + rng.gen_range(0.0..(gap - 5.0).max(0.01) * 0.9);
        items.push((AdTraffic { url: format!("https://pagead2.googlesyndication.com/bg?k={k}"), timestamp: ts }, None));
    }
    items.sort_by(|a, b| a.0.timestamp.total_cmp(&b.0.timestamp));
    let (traffic, truth) = items.into_iter().unzip();
    SyntheticTrace { events, traffic, truth }
}

/// Probes a bundle and correlates its log, returning graph, trace and prior.
pub fn probe_bundle(bundle: Arc<AppBundle>, config: &ProbeConfig, seed: u64) -> (TransitionGraph, ProbeTrace, NetworkPrior) {
    let (graph, trace) = random_probe(bundle, config.budget_steps, seed);
    let traffic = extract_ad_traffic(&trace.syslog, &config.ad_domains, &config.keywords);
    let prior = correlate(&trace.events, &traffic, config.delta_seconds);
    (graph, trace, prior)
}
