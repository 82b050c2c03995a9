//! Online exploration loop: success check, recovery, perception, decision
//! and state update, repeated until a budget runs out.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{ActionKey, AppBundle, Session, SessionConfig, StepOutcome, UiState};
use crate::knowledge::PriorKnowledgeBase;
use crate::memory::{embed, fingerprint, summarize_trajectory, Embedder, Experience, ExperienceStore, Summarizer, TrajectoryStep};
use crate::perception::{restart_descriptor, ActionableElement, Perception, PerceptionConfig, PerceptionStats, VisionCaptioner};
use crate::policy::{
    build_context, decide, render_prompt, ContextInputs, Decision, DecisionBackend, HistoryEntry, PolicyError,
    PromptContext, RenderedPrompt, RetrievedExperience,
};
use crate::utg::{NodeInfo, TransitionGraph, DEFAULT_ALPHA, LAUNCHER};

/// `ceil(1.5 * k_base)` when the last `k_base` states hold at most two
/// distinct values, `k_base` otherwise.
pub fn adaptive_window<S: AsRef<str>>(recent_states: &[S], k_base: usize) -> usize {
    let k_base = k_base.max(1);
    let start = recent_states.len().saturating_sub(k_base);
    let unique: BTreeSet<&str> = recent_states[start..].iter().map(|s| s.as_ref()).collect();
    if unique.len() <= 2 {
        (3 * k_base).div_ceil(2)
    } else {
        k_base
    }
}

/// Interaction history with an adaptive window over its tail.
#[derive(Clone, Debug)]
pub struct HistoryBuffer {
    entries: VecDeque<HistoryEntry>,
    k_base: usize,
    next_seq: usize,
}

impl HistoryBuffer {
    pub fn new(k_base: usize) -> Self {
        Self { entries: VecDeque::new(), k_base: k_base.max(1), next_seq: 1 }
    }

    pub fn k_base(&self) -> usize {
        self.k_base
    }

    fn capacity(&self) -> usize {
        (3 * self.k_base).div_ceil(2)
    }

    pub fn push(&mut self, from: &str, to: &str, action: ActionKey, event: String, ad_flag: bool, timestamp: f64) {
        if let Some(last) = self.entries.back() {
            debug_assert!(last.timestamp <= timestamp, "history must be time-ordered");
        }
        self.entries.push_back(HistoryEntry {
            seq: self.next_seq,
            from: from.to_string(),
            to: to.to_string(),
            action,
            event,
            ad_flag,
            timestamp,
        });
        self.next_seq += 1;
        while self.entries.len() > self.capacity() {
            self.entries.pop_front();
        }
    }

    /// Current window size K_t.
    pub fn window(&self) -> usize {
        let states: Vec<&str> = self.entries.iter().map(|e| e.to.as_str()).collect();
        adaptive_window(&states, self.k_base)
    }

    /// The last K_t entries, oldest first.
    pub fn recent(&self) -> Vec<HistoryEntry> {
        let k = self.window();
        self.entries.iter().skip(self.entries.len().saturating_sub(k)).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ad id credited for an outcome, if any and not yet seen this episode.
/// Exposure flags win; otherwise arrival at a success activity counts as
/// `activity:<name>`.
pub fn detect_success(outcome: &StepOutcome, success_activities: &BTreeSet<String>, seen: &mut BTreeSet<String>) -> Option<String> {
    let id = outcome.ad_exposed.clone().or_else(|| {
        success_activities.contains(&outcome.next.activity).then(|| format!("activity:{}", outcome.next.activity))
    })?;
    seen.insert(id.clone()).then_some(id)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    Back,
    Restart,
}

/// Gets the app back to the foreground: restart after a crash, back when
/// another app took over (restart if back does not help). `None` when
/// neither applies.
pub fn recover(session: &mut Session, outcome: &StepOutcome) -> Option<Vec<(Recovery, StepOutcome)>> {
    if outcome.crashed {
        return Some(vec![(Recovery::Restart, session.step(&ActionKey::Restart))]);
    }
    if !outcome.backgrounded {
        return None;
    }
    let back = session.step(&ActionKey::Back);
    if back.backgrounded || back.crashed || back.dead_action {
        let restart = session.step(&ActionKey::Restart);
        return Some(vec![(Recovery::Back, back), (Recovery::Restart, restart)]);
    }
    Some(vec![(Recovery::Back, back)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Simulated,
    WallClock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    pub max_steps: usize,
    pub max_seconds: f64,
    pub event_interval_seconds: f64,
    /// Stop once this many distinct ads are found.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ads: Option<usize>,
    pub clock: ClockMode,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self { max_steps: 60, max_seconds: 300.0, event_interval_seconds: 5.0, max_ads: None, clock: ClockMode::Simulated }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavigatorConfig {
    pub limits: EpisodeLimits,
    pub k_base: usize,
    pub alpha: f64,
    pub hops: usize,
    pub retrieve_k: usize,
    pub perception: PerceptionConfig,
    /// Keep each rendered prompt in the step log.
    pub record_prompts: bool,
    /// Relaunch the app after each find instead of continuing from the
    /// ad screen.
    pub restart_on_success: bool,
}

impl Default for NavigatorConfig {
    fn default() -> Self {
        Self {
            limits: EpisodeLimits::default(),
            k_base: 5,
            alpha: DEFAULT_ALPHA,
            hops: 2,
            retrieve_k: 3,
            perception: PerceptionConfig::default(),
            record_prompts: false,
            restart_on_success: true,
        }
    }
}

/// Chooses one option per step.
pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Whether the navigator should retrieve experiences for the context.
    fn uses_memory(&self) -> bool {
        false
    }

    fn choose(&mut self, ctx: &PromptContext) -> Result<(Decision, Option<RenderedPrompt>), PolicyError>;
}

/// Prompt-and-decide policy over any decision backend.
pub struct AgentPolicy {
    pub name: String,
    pub backend: Arc<dyn DecisionBackend>,
}

impl AgentPolicy {
    pub fn new(name: impl Into<String>, backend: Arc<dyn DecisionBackend>) -> Self {
        Self { name: name.into(), backend }
    }
}

impl Policy for AgentPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn uses_memory(&self) -> bool {
        true
    }

    fn choose(&mut self, ctx: &PromptContext) -> Result<(Decision, Option<RenderedPrompt>), PolicyError> {
        let prompt = render_prompt(ctx);
        let d = decide(&prompt, ctx, self.backend.as_ref())?;
        Ok((d, Some(prompt)))
    }
}

/// Everything an episode reads besides its policy and graph.
pub struct EpisodeEnv<'a> {
    pub bundle: Arc<AppBundle>,
    pub knowledge: &'a PriorKnowledgeBase,
    /// Activities whose appearance alone proves an ad.
    pub success_activities: BTreeSet<String>,
    pub store: Option<&'a ExperienceStore>,
    pub embedder: &'a dyn Embedder,
    pub summarizer: &'a dyn Summarizer,
    pub captioner: Option<Arc<dyn VisionCaptioner>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Decision,
    Recovery,
    Restart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: StepKind,
    /// Decision number; maintenance actions carry the last one.
    pub step: usize,
    pub from: String,
    pub activity: String,
    pub action: ActionKey,
    pub event: String,
    pub to: String,
    pub clock: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad_found: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    AdBudget,
    StepBudget,
    TimeBudget,
    Abort,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdHit {
    pub ad_id: String,
    /// Decisions since the previous find or the episode start.
    pub steps: usize,
    /// Decision number that exposed the ad.
    pub at_step: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub app_id: String,
    pub policy: String,
    pub seed: u64,
    pub distinct_ads: Vec<String>,
    pub steps_taken: usize,
    pub steps_to_each_ad: Vec<AdHit>,
    pub termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_error: Option<String>,
    pub experiences_stored: Vec<u64>,
    pub fallback_decisions: usize,
    pub perception: PerceptionStats,
    pub trajectory: Vec<StepRecord>,
}

/// Text used both to index experiences and to query them.
pub fn screen_text(activity: &str, elements: &[ActionableElement]) -> String {
    let mut parts = vec![activity.rsplit('.').next().unwrap_or(activity).to_string()];
    for e in elements {
        if let Some(l) = e.label() {
            parts.push(l.to_string());
        }
        if let Some(c) = &e.semantic_caption {
            parts.push(c.description.clone());
        }
    }
    parts.join(" / ")
}

struct Loop<'e> {
    graph: &'e mut TransitionGraph,
    session: Session,
    state: UiState,
    history: HistoryBuffer,
    trajectory: Vec<StepRecord>,
    /// Steps since the last restart, for experiences.
    since_restart: Vec<TrajectoryStep>,
    step: usize,
}

impl Loop<'_> {
    fn apply(&mut self, kind: StepKind, action: ActionKey, event: String, decision: Option<Decision>, prompt: Option<String>) -> StepOutcome {
        let from = self.state.clone();
        let outcome = self.session.step(&action);
        let from_info = if action == ActionKey::Restart { NodeInfo::launcher() } else { NodeInfo::from(&from) };
        self.graph.record_transition(&from_info, &event, Some(&action), &NodeInfo::from(&outcome.next));
        let ad_flag = outcome.ad_exposed.is_some();
        self.history.push(&from_info.id, &outcome.next.state_fingerprint, action.clone(), event.clone(), ad_flag, from.clock_seconds);
        self.trajectory.push(StepRecord {
            kind,
            step: self.step,
            from: from_info.id,
            activity: from.activity.clone(),
            action,
            event,
            to: outcome.next.state_fingerprint.clone(),
            clock: from.clock_seconds,
            decision,
            ad_found: None,
            prompt,
        });
        self.state = outcome.next.clone();
        outcome
    }

    fn restart(&mut self) -> StepOutcome {
        self.since_restart.clear();
        self.apply(StepKind::Restart, ActionKey::Restart, restart_descriptor(), None, None)
    }
}

/// Runs one episode. The graph is updated in place; experiences go to the
/// environment's store.
pub fn run_episode(env: &EpisodeEnv<'_>, graph: &mut TransitionGraph, policy: &mut dyn Policy, config: &NavigatorConfig, seed: u64) -> EpisodeReport {
    let started = Instant::now();
    let session_cfg = SessionConfig { event_interval_seconds: config.limits.event_interval_seconds };
    let (session, state) = Session::reset(env.bundle.clone(), seed, session_cfg);
    let mut perception = Perception::new(config.perception.clone(), env.captioner.clone());
    graph.ensure_node(&NodeInfo::launcher());
    let mut lp = Loop {
        graph,
        session,
        state: state.clone(),
        history: HistoryBuffer::new(config.k_base),
        trajectory: Vec::new(),
        since_restart: Vec::new(),
        step: 0,
    };
    // The launch itself: launcher -> initial screen.
    lp.graph.record_transition(&NodeInfo::launcher(), &restart_descriptor(), Some(&ActionKey::Restart), &NodeInfo::from(&state));
    lp.history.push(LAUNCHER, &state.state_fingerprint, ActionKey::Restart, restart_descriptor(), false, 0.0);

    let mut seen = BTreeSet::new();
    let mut found: Vec<String> = Vec::new();
    let mut hits: Vec<AdHit> = Vec::new();
    let mut stored = Vec::new();
    let mut fallbacks = 0;
    let mut last_find = 0;
    let mut abort_error = None;

    let reason = loop {
        if config.limits.max_ads.is_some_and(|m| found.len() >= m) {
            break TerminationReason::AdBudget;
        }
        if lp.step >= config.limits.max_steps {
            break TerminationReason::StepBudget;
        }
        let elapsed = match config.limits.clock {
            ClockMode::Simulated => lp.session.clock(),
            ClockMode::WallClock => started.elapsed().as_secs_f64(),
        };
        if elapsed >= config.limits.max_seconds {
            break TerminationReason::TimeBudget;
        }

        let obs = perception.perceive(&lp.state);
        let experiences = if policy.uses_memory() {
            retrieve(env, &lp.state.activity, &obs.elements, config.retrieve_k)
        } else {
            Vec::new()
        };
        let recent = lp.history.recent();
        let ctx = build_context(
            ContextInputs {
                activity: &lp.state.activity,
                fingerprint: &lp.state.state_fingerprint,
                elements: &obs.elements,
                history: &recent,
                experiences,
                hops: config.hops,
            },
            lp.graph,
            env.knowledge,
        );
        let (decision, prompt) = match policy.choose(&ctx) {
            Ok(v) => v,
            Err(e) => {
                tracing::error!(error = %e, step = lp.step, "decision failed; aborting episode");
                abort_error = Some(e.to_string());
                break TerminationReason::Abort;
            }
        };
        if decision.fallback {
            fallbacks += 1;
        }
        let element = obs.elements[decision.choice].clone();
        let fp = lp.state.state_fingerprint.clone();
        if let Err(e) = lp.graph.update_score(&fp, decision.ad_score.clamp(0.0, 1.0), config.alpha) {
            tracing::warn!(error = %e, "score update skipped");
        }
        lp.step += 1;
        let from_state = lp.state.clone();
        let event = element.event_descriptor(&fp);
        let prompt_text = prompt.filter(|_| config.record_prompts).map(|p| p.integrated);
        let outcome = lp.apply(StepKind::Decision, element.action_key.clone(), event, Some(decision), prompt_text);
        lp.since_restart.push(TrajectoryStep {
            action: element.action_key.clone(),
            widget_class: element.class_or_kind.clone(),
            widget_label: element.label().map(str::to_string).or_else(|| element.semantic_caption.as_ref().map(|c| c.to_string())),
        });

        if let Some(ad) = detect_success(&outcome, &env.success_activities, &mut seen) {
            tracing::info!(app = %env.bundle.app_id, ad = %ad, step = lp.step, "ad found");
            lp.trajectory.last_mut().expect("just pushed").ad_found = Some(ad.clone());
            hits.push(AdHit { ad_id: ad.clone(), steps: lp.step - last_find, at_step: lp.step });
            last_find = lp.step;
            if let Some(id) = remember(env, &lp.since_restart, &ad, &from_state, &obs.elements) {
                stored.push(id);
            }
            found.push(ad);
            if config.limits.max_ads.is_some_and(|m| found.len() >= m) {
                break TerminationReason::AdBudget;
            }
            if config.restart_on_success {
                lp.restart();
                continue;
            }
        }
        if let Some(steps) = recover(&mut lp.session, &outcome) {
            // Recovery already ran on the session; mirror it in the logs.
            for (kind, out) in steps {
                let from = lp.state.clone();
                let (action, event) = match kind {
                    Recovery::Back => (ActionKey::Back, format!("KeyEvent(state={}, name=BACK)", from.state_fingerprint)),
                    Recovery::Restart => (ActionKey::Restart, restart_descriptor()),
                };
                let from_info = if action == ActionKey::Restart { NodeInfo::launcher() } else { NodeInfo::from(&from) };
                lp.graph.record_transition(&from_info, &event, Some(&action), &NodeInfo::from(&out.next));
                lp.history.push(&from_info.id, &out.next.state_fingerprint, action.clone(), event.clone(), false, from.clock_seconds);
                lp.trajectory.push(StepRecord {
                    kind: if action == ActionKey::Restart { StepKind::Restart } else { StepKind::Recovery },
                    step: lp.step,
                    from: from_info.id,
                    activity: from.activity.clone(),
                    action: action.clone(),
                    event,
                    to: out.next.state_fingerprint.clone(),
                    clock: from.clock_seconds,
                    decision: None,
                    ad_found: None,
                    prompt: None,
                });
                if action == ActionKey::Restart {
                    lp.since_restart.clear();
                }
                lp.state = out.next;
            }
        }
    };

    EpisodeReport {
        app_id: env.bundle.app_id.clone(),
        policy: policy.name().to_string(),
        seed,
        distinct_ads: found,
        steps_taken: lp.step,
        steps_to_each_ad: hits,
        termination_reason: reason,
        abort_error,
        experiences_stored: stored,
        fallback_decisions: fallbacks,
        perception: perception.stats().clone(),
        trajectory: lp.trajectory,
    }
}

fn retrieve(env: &EpisodeEnv<'_>, activity: &str, elements: &[ActionableElement], k: usize) -> Vec<RetrievedExperience> {
    let Some(store) = env.store else { return Vec::new() };
    if store.is_empty() || k == 0 {
        return Vec::new();
    }
    match store.retrieve_text(&screen_text(activity, elements), env.embedder, k) {
        Ok(hits) => hits.into_iter().map(|(e, s)| RetrievedExperience { summary: e.summary, similarity: s }).collect(),
        Err(e) => {
            tracing::warn!(error = %e, "experience retrieval failed");
            Vec::new()
        }
    }
}

fn remember(
    env: &EpisodeEnv<'_>,
    steps: &[TrajectoryStep],
    ad: &str,
    trigger_state: &UiState,
    elements: &[ActionableElement],
) -> Option<u64> {
    let store = env.store?;
    let trajectory = steps.to_vec();
    let ad_type = env.bundle.ad_type_of(ad);
    let summary = summarize_trajectory(&trajectory, ad_type, env.summarizer).ok()?;
    let labels: Vec<String> = trajectory.iter().filter_map(|s| s.widget_label.clone()).collect();
    let text = format!("{} / {} / {}", summary, labels.join(" / "), screen_text(&trigger_state.activity, elements));
    let embedding = match embed(&text, env.embedder) {
        Ok(v) => v,
        Err(e) => {
            tracing::warn!(error = %e, "experience not embedded");
            return None;
        }
    };
    let mut exp = Experience::new(fingerprint(trigger_state), embedding, summary, env.bundle.app_id.clone(), trajectory);
    exp.ad_type = ad_type;
    match store.store(exp) {
        Ok(id) => Some(id),
        Err(e) => {
            tracing::warn!(error = %e, "experience not stored");
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub total_ads: usize,
    pub found_ads: usize,
    pub detection_rate: f64,
    /// Mean decisions per credited ad; absent when nothing was found.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_steps: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no episode reports")]
    EmptyCorpus,
    #[error("app '{0}' missing from the corpus manifest")]
    UnknownApp(String),
}

/// Detection rate and average steps over reports, crediting only
/// ground-truth ads listed for each report's app.
pub fn compute_metrics(reports: &[EpisodeReport], ground_truth: &BTreeMap<String, BTreeSet<String>>) -> Result<Metrics, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let (mut total, mut found, mut step_sum) = (0usize, 0usize, 0usize);
    for r in reports {
        let truth = ground_truth.get(&r.app_id).ok_or_else(|| MetricsError::UnknownApp(r.app_id.clone()))?;
        total += truth.len();
        for h in r.steps_to_each_ad.iter().filter(|h| truth.contains(&h.ad_id)) {
            found += 1;
            step_sum += h.steps;
        }
    }
    Ok(Metrics {
        episodes: reports.len(),
        total_ads: total,
        found_ads: found,
        detection_rate: if total == 0 { 0.0 } else { found as f64 / total as f64 },
        avg_steps: (found > 0).then(|| step_sum as f64 / found as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_expands_only_when_stagnating() {
        assert_eq!(adaptive_window(&["a", "b", "c", "d", "e"], 5), 5);
        assert_eq!(adaptive_window(&["a"; 5], 5), 8);
        assert_eq!(adaptive_window(&["a", "b", "a", "b"], 4), 6);
        // Only the last k_base states count.
        assert_eq!(adaptive_window(&["x", "y", "z", "a", "a"], 2), 3);
    }

    #[test]
    fn history_keeps_the_window_tail() {
        let mut h = HistoryBuffer::new(3);
        for (i, s) in ["a", "b", "c", "d"].iter().enumerate() {
            h.push("p", s, ActionKey::Back, format!("e{i}"), false, i as f64);
        }
        assert_eq!(h.window(), 3);
        assert_eq!(h.recent().iter().map(|e| e.seq).collect::<Vec<_>>(), [2, 3, 4]);
        h.push("p", "d", ActionKey::Back, "e".into(), false, 9.0);
        assert_eq!(h.window(), 5);
        assert_eq!(h.recent().iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn metrics_handle_empty_and_unfound() {
        assert_eq!(compute_metrics(&[], &BTreeMap::new()), Err(MetricsError::EmptyCorpus));
    }
}
