use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionKey, AppBundle, EmissionLine, StateId, TransitionEffect, UiState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Simulated wait after every event before the next one.
    pub event_interval_seconds: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { event_interval_seconds: 5.0 }
    }
}

/// One system-log record. Line form: `ts|tag|message`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub timestamp: f64,
    pub tag: String,
    pub message: String,
}

impl LogRecord {
    pub fn parse_line(line: &str) -> Option<LogRecord> {
        let mut parts = line.splitn(3, '|');
        let timestamp = parts.next()?.trim().parse().ok()?;
        let tag = parts.next()?.to_string();
        let message = parts.next()?.to_string();
        Some(LogRecord { timestamp, tag, message })
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}|{}|{}", self.timestamp, self.tag, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub action: ActionKey,
    pub next: UiState,
    pub events: Vec<LogRecord>,
    pub ad_exposed: Option<String>,
    pub crashed: bool,
    pub backgrounded: bool,
    /// The action had no effect in the current state (inert tap).
    pub dead_action: bool,
}

/// A running instance of a bundle. Single owner; not shareable.
pub struct Session {
    bundle: Arc<AppBundle>,
    transitions: HashMap<(StateId, ActionKey), TransitionEffect>,
    emissions: HashMap<(StateId, ActionKey), Vec<EmissionLine>>,
    config: SessionConfig,
    rng: ChaCha8Rng,
    state: StateId,
    clock: f64,
    entered_at: f64,
    history: Vec<ActionKey>,
    log: Vec<LogRecord>,
    crashed: bool,
}

impl Session {
    /// Launches the app at its initial state with the clock at zero.
    pub fn reset(bundle: Arc<AppBundle>, seed: u64, config: SessionConfig) -> (Session, UiState) {
        let transitions = bundle
            .behavior
            .transitions
            .iter()
            .map(|t| ((t.from.clone(), t.action.clone()), t.effect.clone()))
            .collect();
        let mut emissions: HashMap<(StateId, ActionKey), Vec<EmissionLine>> = HashMap::new();
        for e in &bundle.behavior.emissions {
            emissions
                .entry((e.from.clone(), e.action.clone()))
                .or_default()
                .extend(e.lines.iter().cloned());
        }
        let session = Session {
            state: bundle.behavior.initial_state.clone(),
            bundle,
            transitions,
            emissions,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0.0,
            entered_at: 0.0,
            history: Vec::new(),
            log: Vec::new(),
            crashed: false,
        };
        let obs = session.observe();
        (session, obs)
    }

    pub fn bundle(&self) -> &Arc<AppBundle> {
        &self.bundle
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn is_backgrounded(&self) -> bool {
        self.bundle.rendering[&self.state].external
    }

    /// Latent state id. For harness and oracle code only.
    pub fn latent_state(&self) -> &str {
        &self.state
    }

    pub fn action_history(&self) -> &[ActionKey] {
        &self.history
    }

    pub fn emission_log(&self) -> &[LogRecord] {
        &self.log
    }

    /// Emission log as `ts|tag|message` lines.
    pub fn export_log(&self) -> String {
        let mut out = String::new();
        for r in &self.log {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn observe(&self) -> UiState {
        self.bundle
            .observe_state(&self.state, self.clock)
            .expect("session state is validated to exist")
    }

    /// Whether `action` has a scripted effect in the current state.
    pub fn accepts(&self, action: &ActionKey) -> bool {
        *action == ActionKey::Restart
            || (!self.crashed && self.transitions.contains_key(&(self.state.clone(), action.clone())))
    }

    /// Executes one action. Unknown actions are inert: the clock still
    /// advances by the event interval and `dead_action` is set.
    pub fn step(&mut self, action: &ActionKey) -> StepOutcome {
        let t0 = self.clock;
        let from = self.state.clone();
        let from_activity = self.bundle.rendering[&from].activity.clone();
        self.history.push(action.clone());

        let mut dead = false;
        let mut crashed_now = false;
        let mut background_flag = false;
        let mut delay = 0.0;
        if *action == ActionKey::Restart {
            self.crashed = false;
            self.state = self.bundle.behavior.initial_state.clone();
            self.entered_at = t0;
        } else if self.crashed {
            dead = true;
        } else if let Some(effect) = self.transitions.get(&(from.clone(), action.clone())).cloned() {
            delay = effect.delay_seconds;
            if effect.next_state != from {
                self.entered_at = t0 + delay;
            }
            self.state = effect.next_state;
            crashed_now = effect.crash;
            background_flag = effect.background;
            self.crashed = effect.crash;
        } else {
            dead = true;
        }

        let mut events = Vec::new();
        if !dead {
            let jitter = self.bundle.behavior.emission_jitter_seconds;
            if let Some(lines) = self.emissions.get(&(from.clone(), action.clone())) {
                for line in lines {
                    let j = if jitter > 0.0 { self.rng.gen_range(0.0..jitter) } else { 0.0 };
                    events.push(LogRecord {
                        timestamp: t0 + line.offset_seconds + j,
                        tag: line.tag.clone(),
                        message: line.message.clone(),
                    });
                }
            }
            let to_activity = &self.bundle.rendering[&self.state].activity;
            if *to_activity != from_activity || *action == ActionKey::Restart {
                events.push(LogRecord {
                    timestamp: t0 + delay,
                    tag: "ActivityTaskManager".into(),
                    message: format!("Displayed {to_activity}"),
                });
            }
            if crashed_now {
                events.push(LogRecord {
                    timestamp: t0 + delay,
                    tag: "AndroidRuntime".into(),
                    message: format!("FATAL EXCEPTION: main ({})", self.bundle.manifest.package),
                });
            }
        }
        events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        for e in &events {
            let at = self.log.partition_point(|r| r.timestamp <= e.timestamp);
            self.log.insert(at, e.clone());
        }

        self.clock = t0 + delay + self.config.event_interval_seconds;
        let ad_exposed = self.exposed_ad();
        let next = self.observe();
        StepOutcome {
            action: action.clone(),
            backgrounded: background_flag || next.external,
            next,
            events,
            ad_exposed,
            crashed: crashed_now || self.crashed,
            dead_action: dead,
        }
    }

    /// First non-silent trigger whose predicate holds now: current state is
    /// the host, the required context is a suffix of the action history, and
    /// the dwell in the host state meets the minimum.
    fn exposed_ad(&self) -> Option<String> {
        let dwell = self.clock - self.entered_at;
        self.bundle
            .behavior
            .ad_triggers
            .iter()
            .filter(|t| !t.silent && t.host_state == self.state)
            .find(|t| self.history.ends_with(&t.required_context) && dwell + 1e-9 >= t.min_dwell_seconds)
            .map(|t| t.ad_id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::parse_bundle;

    fn bundle(text: &str) -> Arc<AppBundle> {
        Arc::new(parse_bundle(text).unwrap())
    }

    const TIMED: &str = r#"{
        "app_id": "timed",
        "manifest": {"package": "com.example.timed", "activities": ["Main", "Video"]},
        "behavior": {
            "initial_state": "main",
            "transitions": [
                {"from": "main", "action": "tap:0", "next_state": "video"},
                {"from": "main", "action": "tap:1", "next_state": "main"},
                {"from": "video", "action": "back", "next_state": "main"},
                {"from": "video", "action": "tap:0", "next_state": "video", "crash": true}
            ],
            "ad_triggers": [
                {"ad_id": "reward", "host_state": "video", "required_context": ["tap:0"],
                 "min_dwell_seconds": 5, "ad_type": "popup"}
            ],
            "emissions": [
                {"from": "main", "action": "tap:0", "lines": [
                    {"offset_seconds": 3.5, "tag": "Ads", "message": "GET https://googleads.g.doubleclick.net/x"}]}
            ]
        },
        "rendering": {
            "main": {"activity": "Main", "rendering": {"hierarchy": [
                {"class": "Button", "text": "Watch Video", "bounds": [0, 0, 100, 50], "clickable": true},
                {"class": "Button", "text": "Refresh", "bounds": [0, 60, 100, 110], "clickable": true}]}},
            "video": {"activity": "Video", "rendering": {"hierarchy": [
                {"class": "VideoView", "bounds": [0, 0, 1080, 900], "clickable": true}]}}
        }
    }"#;

    #[test]
    fn reset_is_deterministic_and_observe_is_pure() {
        let b = bundle(TIMED);
        let (s1, o1) = Session::reset(b.clone(), 7, SessionConfig::default());
        let (_, o2) = Session::reset(b, 7, SessionConfig::default());
        assert_eq!(o1, o2);
        assert_eq!(s1.observe(), o1);
        assert_eq!(s1.observe(), s1.observe());
        assert_eq!(o1.activity, "Main");
        assert_eq!(o1.clock_seconds, 0.0);
    }

    #[test]
    fn self_loop_keeps_fingerprint_and_advances_clock() {
        let (mut s, o) = Session::reset(bundle(TIMED), 0, SessionConfig::default());
        let out = s.step(&ActionKey::Tap(1));
        assert_eq!(out.next.state_fingerprint, o.state_fingerprint);
        assert_eq!(out.next.clock_seconds, 5.0);
        assert!(!out.dead_action);
    }

    #[test]
    fn dwell_gated_ad_fires_on_first_qualifying_step() {
        // Enter video at t=0 (no delay), wait 5 s interval: dwell 5 >= 5.
        let (mut s, _) = Session::reset(bundle(TIMED), 0, SessionConfig::default());
        let out = s.step(&ActionKey::Tap(0));
        assert_eq!(out.ad_exposed.as_deref(), Some("reward"));
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.events[1].timestamp, 3.5);
    }

    #[test]
    fn shorter_interval_delays_the_dwell_gated_ad() {
        let cfg = SessionConfig { event_interval_seconds: 2.0 };
        let (mut s, _) = Session::reset(bundle(TIMED), 0, cfg);
        assert_eq!(s.step(&ActionKey::Tap(0)).ad_exposed, None);
        // Context suffix is now broken by the back action.
        assert_eq!(s.step(&ActionKey::Back).ad_exposed, None);
    }

    #[test]
    fn dead_taps_are_inert_but_advance_the_clock() {
        let (mut s, o) = Session::reset(bundle(TIMED), 0, SessionConfig::default());
        let out = s.step(&ActionKey::Tap(42));
        assert!(out.dead_action);
        assert_eq!(out.next.state_fingerprint, o.state_fingerprint);
        assert_eq!(s.clock(), 5.0);
    }

    #[test]
    fn crash_then_restart_restores_initial_state() {
        let (mut s, o) = Session::reset(bundle(TIMED), 0, SessionConfig::default());
        s.step(&ActionKey::Tap(0));
        let crashed = s.step(&ActionKey::Tap(0));
        assert!(crashed.crashed);
        assert!(s.step(&ActionKey::Back).dead_action);
        let restarted = s.step(&ActionKey::Restart);
        assert!(!restarted.crashed);
        assert_eq!(restarted.next.state_fingerprint, o.state_fingerprint);
        assert!(s.clock() > 0.0);
    }

    #[test]
    fn log_lines_round_trip() {
        let r = LogRecord { timestamp: 12.5, tag: "Ads".into(), message: "GET https://a.b/c?x=1|2".into() };
        let parsed = LogRecord::parse_line(&r.to_string()).unwrap();
        assert_eq!(parsed, r);
        assert!(LogRecord::parse_line("garbage").is_none());
    }
}
