//! Decision context, prompt rendering and decision parsing.

mod oracle;

pub use oracle::{OracleConfig, ScriptedOracle};

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::ActionKey;
use crate::knowledge::PriorKnowledgeBase;
use crate::llm::{BackendError, ChatBackend, ChatRequest, RequestKind};
use crate::perception::{ActionableElement, ElementSource};
use crate::utg::TransitionGraph;

pub const SECTION_OPTIONS: &str = "1. Current Screen Options";
pub const SECTION_KNOWLEDGE: &str = "2. Static App Knowledge";
pub const SECTION_STRATEGY: &str = "3. Strategic Context";
pub const SUBSECTION_MAP: &str = "(a) Annotated Local Map (from UTG, 2-hop neighborhood)";
pub const SUBSECTION_HISTORY: &str = "(b) Recent History";
pub const SECTION_EXPERIENCES: &str = "4. Past Experiences";
const EMPTY: &str = "(none)";

pub const SYSTEM_PROMPT: &str = "You drive an Android app to find every place where advertisements appear. \
Each turn you get the actionable views on screen, what offline analysis knows about the app, \
a map of nearby screens with ad scores, recent steps and lessons from earlier sessions. \
Pick one view to act on. Prefer views likely to surface an ad; avoid screens you keep revisiting. \
Reply with one JSON object: {\"reasoning\": string, \"ad_score\": number between 0 and 1 rating \
how ad-related the current screen is, \"choice\": index of the view}.";

pub const CORRECTION: &str = "Your previous reply was not usable. Reply with exactly one JSON object \
with keys \"reasoning\", \"ad_score\" (0 to 1) and \"choice\" (a listed view index).";

/// Known successor of an option in the transition graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub state: String,
    pub visits: u64,
    pub score: f64,
}

/// One option with the evidence attached to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextOption {
    pub element: ActionableElement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successor: Option<Successor>,
    /// Resource id names a known ad container.
    #[serde(default)]
    pub component_match: bool,
    /// Offline probing saw ad traffic right after this action here.
    #[serde(default)]
    pub network_match: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub hop: usize,
    pub state: String,
    pub event: String,
    pub score: f64,
    pub visits: u64,
}

/// One interaction, as remembered by the navigator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// 1-based position in the episode; the launch is entry 1.
    pub seq: usize,
    pub from: String,
    pub to: String,
    pub action: ActionKey,
    pub event: String,
    pub ad_flag: bool,
    pub timestamp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExperience {
    pub summary: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub activity: String,
    pub fingerprint: String,
    pub visits: u64,
    pub score: f64,
    pub options: Vec<ContextOption>,
    pub knowledge: Vec<String>,
    pub local_map: Vec<MapEntry>,
    pub history: Vec<HistoryEntry>,
    pub experiences: Vec<RetrievedExperience>,
}

impl PromptContext {
    pub fn elements(&self) -> impl Iterator<Item = &ActionableElement> {
        self.options.iter().map(|o| &o.element)
    }
}

fn short_name(name: &str) -> &str {
    name.rsplit('.').next().unwrap_or(name)
}

fn method_name(signature: &str) -> &str {
    let head = signature.split('(').next().unwrap_or(signature);
    head.rsplit('.').next().unwrap_or(head)
}

fn quoted_list<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let inner: Vec<String> = items.into_iter().map(|s| format!("'{s}'")).collect();
    format!("[{}]", inner.join(", "))
}

/// Start of the knowledge line naming trigger methods of the current
/// activity.
pub const TRIGGER_MATCH_PREFIX: &str = "[Activity Match] This activity contains potential ad trigger(s) in method(s):";

/// Prior-knowledge lines relevant to the current screen: activity matches,
/// component matches, network matches, then app-wide facts.
pub fn knowledge_slice(kb: &PriorKnowledgeBase, activity: &str, fingerprint: &str, elements: &[ActionableElement]) -> Vec<String> {
    let mut lines = Vec::new();
    let short = short_name(activity);
    let entry = kb.activity(activity).or_else(|| kb.activities.iter().find(|(k, _)| short_name(k) == short).map(|(_, v)| v));
    if let Some(a) = entry {
        lines.push(format!("[Activity Match] Current activity '{short}' is listed as ad-related."));
        let mut seen = BTreeSet::new();
        let methods: Vec<&str> =
            a.trigger_methods.iter().map(|m| method_name(&m.signature)).filter(|m| seen.insert(*m)).collect();
        if !methods.is_empty() {
            lines.push(format!(
                "{TRIGGER_MATCH_PREFIX} {}.",
                quoted_list(methods)
            ));
        }
    }
    let mut components = BTreeSet::new();
    if let Some(a) = entry {
        components.extend(a.slots.iter().filter_map(|s| s.resource_id.clone()));
    }
    for e in elements {
        if let Some(id) = &e.resource_id {
            if kb.component(id).is_some() {
                components.insert(id.clone());
            }
        }
    }
    for id in components {
        lines.push(format!("[Component Match] A component with resource_id '{id}' is a known ad container."));
    }
    for h in kb.hints_for_state(fingerprint) {
        let target = elements
            .iter()
            .find(|e| e.action_key == h.action)
            .map_or_else(|| format!("action '{}'", h.action), |e| format!("View {}", e.index));
        lines.push(format!(
            "[Network Match] {target} on this screen was followed by ad traffic to '{}' after {:.1} s.",
            h.host, h.lag_seconds
        ));
    }
    if !kb.libraries.is_empty() {
        lines.push(format!("[General Info] App uses ad libraries: {}", quoted_list(kb.libraries.iter().map(String::as_str))));
    }
    lines
}

/// Most-visited known target of `action` from `from`.
pub fn successor_of(graph: &TransitionGraph, from: &str, action: &ActionKey) -> Option<Successor> {
    graph
        .out_edges(from)
        .filter(|e| e.action.as_ref() == Some(action))
        .filter_map(|e| graph.node(&e.to))
        .max_by(|a, b| a.visits.cmp(&b.visits).then_with(|| b.id.cmp(&a.id)))
        .map(|n| Successor { state: n.id.clone(), visits: n.visits, score: n.score })
}

/// Entries of the annotated map: every edge leaving the current state,
/// then for each further hop the edges that discover new states.
pub fn local_map(graph: &TransitionGraph, fingerprint: &str, hops: usize) -> Vec<MapEntry> {
    let Ok(hood) = graph.neighborhood(fingerprint, hops) else { return Vec::new() };
    let dist: std::collections::BTreeMap<&str, usize> = hood.nodes.iter().map(|(d, n)| (n.id.as_str(), *d)).collect();
    let mut out = Vec::new();
    for hop in 1..=hops {
        for e in &hood.edges {
            if dist[e.from.as_str()] + 1 != hop {
                continue;
            }
            if hop > 1 && dist[e.to.as_str()] != hop {
                continue;
            }
            out.push(MapEntry {
                hop,
                state: e.to.clone(),
                event: e.event.clone(),
                score: graph.score(&e.to),
                visits: graph.visits(&e.to),
            });
        }
    }
    out
}

/// Inputs for [`build_context`] that vary per step.
pub struct ContextInputs<'a> {
    pub activity: &'a str,
    pub fingerprint: &'a str,
    pub elements: &'a [ActionableElement],
    pub history: &'a [HistoryEntry],
    pub experiences: Vec<RetrievedExperience>,
    pub hops: usize,
}

pub fn build_context(inputs: ContextInputs<'_>, graph: &TransitionGraph, kb: &PriorKnowledgeBase) -> PromptContext {
    let fp = inputs.fingerprint;
    let options = inputs
        .elements
        .iter()
        .map(|e| ContextOption {
            successor: successor_of(graph, fp, &e.action_key),
            component_match: e.resource_id.as_deref().is_some_and(|id| kb.component(id).is_some()),
            network_match: kb.hints_for_state(fp).any(|h| h.action == e.action_key),
            element: e.clone(),
        })
        .collect();
    PromptContext {
        activity: inputs.activity.to_string(),
        fingerprint: fp.to_string(),
        visits: graph.visits(fp),
        score: graph.score(fp),
        options,
        knowledge: knowledge_slice(kb, inputs.activity, fp, inputs.elements),
        local_map: local_map(graph, fp, inputs.hops),
        history: inputs.history.to_vec(),
        experiences: inputs.experiences,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub integrated: String,
}

fn option_line(e: &ActionableElement) -> String {
    let caption = e.semantic_caption.as_ref().map(|c| c.to_string());
    match e.source {
        ElementSource::Region => format!("- View {}, Text='{}'", e.index, caption.as_deref().unwrap_or("N/A")),
        ElementSource::Global => {
            let text = match e.action_key {
                ActionKey::Back => "[BACK] Return to previous screen",
                _ => "[SCROLL] Scroll down to reveal more content",
            };
            format!("- View {}: Type='{}', Text='{text}'", e.index, e.short_class())
        }
        ElementSource::Hierarchy => {
            let mut line = format!("- View {}: Type='{}'", e.index, e.short_class());
            match (e.label(), caption) {
                (Some(label), Some(c)) => write!(line, ", Text='{label}', Caption='{c}'"),
                (Some(label), None) => write!(line, ", Text='{label}'"),
                (None, Some(c)) => write!(line, ", Text='{c}'"),
                (None, None) => match &e.resource_id {
                    Some(id) => write!(line, ", Res-ID='{id}'"),
                    None => write!(line, ", Text='N/A'"),
                },
            }
            .expect("write to string");
            line
        }
    }
}

fn push_lines(out: &mut String, lines: impl IntoIterator<Item = String>) {
    let mut any = false;
    for l in lines {
        out.push_str(&l);
        out.push('\n');
        any = true;
    }
    if !any {
        out.push_str(EMPTY);
        out.push('\n');
    }
}

pub fn render_prompt(ctx: &PromptContext) -> RenderedPrompt {
    let mut s = String::new();
    s.push_str(SECTION_OPTIONS);
    s.push('\n');
    push_lines(&mut s, ctx.elements().map(option_line));

    s.push_str(SECTION_KNOWLEDGE);
    s.push('\n');
    push_lines(&mut s, ctx.knowledge.iter().cloned());

    s.push_str(SECTION_STRATEGY);
    s.push('\n');
    s.push_str(SUBSECTION_MAP);
    s.push('\n');
    let mut map = vec![format!(
        "Current State[{}] (visited: {} times), ad_score: {:.2}",
        ctx.fingerprint, ctx.visits, ctx.score
    )];
    let mut hop = 0;
    for m in &ctx.local_map {
        if m.hop != hop {
            hop = m.hop;
            map.push(format!("**Reachable in {hop}-hop(s):**"));
        }
        map.push(format!(
            "- State: [{}], event: '{}', ad_score: {:.2} (visited: {} times)",
            m.state, m.event, m.score, m.visits
        ));
    }
    push_lines(&mut s, map);
    s.push_str(SUBSECTION_HISTORY);
    s.push('\n');
    push_lines(&mut s, ctx.history.iter().map(|h| format!("- Step {} [{}] -> [{}] {}", h.seq, h.from, h.to, h.event)));

    s.push_str(SECTION_EXPERIENCES);
    s.push('\n');
    push_lines(&mut s, ctx.experiences.iter().map(|e| format!("- {}", e.summary)));

    let rendered = RenderedPrompt { system: SYSTEM_PROMPT.to_string(), integrated: s };
    debug_assert!(sections_in_order(&rendered.integrated));
    rendered
}

/// All four section headings present, each once, in order.
pub fn sections_in_order(integrated: &str) -> bool {
    let lines: Vec<&str> = integrated.lines().collect();
    let mut last = None;
    for h in [SECTION_OPTIONS, SECTION_KNOWLEDGE, SECTION_STRATEGY, SUBSECTION_MAP, SUBSECTION_HISTORY, SECTION_EXPERIENCES] {
        let found: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| **l == h).map(|(i, _)| i).collect();
        if found.len() != 1 || last.is_some_and(|p| found[0] <= p) {
            return false;
        }
        last = Some(found[0]);
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub choice: usize,
    pub ad_score: f64,
    pub reasoning: String,
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("no decision object in reply")]
    Unparseable,
    #[error("choice {choice} outside 0..{options}")]
    ChoiceOutOfRange { choice: usize, options: usize },
    #[error("ad_score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("screen offers no options")]
    NoOptions,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Balanced `{...}` spans in order of their opening brace, string-aware.
fn object_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for start in bytes.iter().enumerate().filter(|(_, b)| **b == b'{').map(|(i, _)| i) {
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push(&text[start..=i]);
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

fn as_choice(v: &serde_json::Value) -> Option<usize> {
    match v {
        serde_json::Value::Number(n) => n.as_u64().map(|n| n as usize),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_score(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// First object in `raw` carrying a choice and an ad score. Bounds are not
/// checked here.
pub fn parse_decision(raw: &str) -> Result<Decision, PolicyError> {
    for span in object_spans(raw) {
        let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(span) else { continue };
        let (Some(choice), Some(ad_score)) =
            (map.get("choice").and_then(as_choice), map.get("ad_score").and_then(as_score))
        else {
            continue;
        };
        let reasoning = map.get("reasoning").and_then(|r| r.as_str()).unwrap_or("").to_string();
        return Ok(Decision { choice, ad_score, reasoning, fallback: false });
    }
    Err(PolicyError::Unparseable)
}

pub fn validate(decision: &Decision, options: usize) -> Result<(), PolicyError> {
    if decision.choice >= options {
        return Err(PolicyError::ChoiceOutOfRange { choice: decision.choice, options });
    }
    if !(0.0..=1.0).contains(&decision.ad_score) {
        return Err(PolicyError::ScoreOutOfRange(decision.ad_score));
    }
    Ok(())
}

/// Source of raw decision replies.
pub trait DecisionBackend: Send + Sync {
    fn reply(&self, prompt: &RenderedPrompt, ctx: &PromptContext, correction: Option<&str>) -> Result<String, BackendError>;
}

/// Sends the rendered prompt to a chat backend.
pub struct ChatDecisionBackend {
    pub chat: Arc<dyn ChatBackend>,
}

impl DecisionBackend for ChatDecisionBackend {
    fn reply(&self, prompt: &RenderedPrompt, _ctx: &PromptContext, correction: Option<&str>) -> Result<String, BackendError> {
        let mut user = prompt.integrated.clone();
        if let Some(c) = correction {
            user.push('\n');
            user.push_str(c);
        }
        self.chat.complete(&ChatRequest { kind: RequestKind::Decision, system: prompt.system.clone(), user })
    }
}

/// Option whose known successor is least visited; unknown successors count
/// as unvisited, ties go to the lower index.
pub fn least_visited_option(ctx: &PromptContext) -> Option<usize> {
    ctx.options
        .iter()
        .enumerate()
        .min_by_key(|(i, o)| (o.successor.as_ref().map_or(0, |s| s.visits), *i))
        .map(|(i, _)| i)
}

/// Queries the backend, reprompting once on an unusable reply, then
/// falling back to the least-visited neighbor.
pub fn decide(prompt: &RenderedPrompt, ctx: &PromptContext, backend: &dyn DecisionBackend) -> Result<Decision, PolicyError> {
    let n = ctx.options.len();
    if n == 0 {
        return Err(PolicyError::NoOptions);
    }
    let mut correction = None;
    for attempt in 0..2 {
        let raw = backend.reply(prompt, ctx, correction)?;
        match parse_decision(&raw).and_then(|d| validate(&d, n).map(|_| d)) {
            Ok(d) => return Ok(d),
            Err(e) => {
                tracing::warn!(attempt, error = %e, "unusable decision reply");
                correction = Some(CORRECTION);
            }
        }
    }
    let choice = least_visited_option(ctx).expect("options are non-empty");
    Ok(Decision {
        choice,
        ad_score: ctx.score.clamp(0.0, 1.0),
        reasoning: format!("Fallback: option {choice} leads to the least visited neighbor."),
        fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::Rect;
    use std::sync::Mutex;

    fn element(index: usize, class: &str, text: Option<&str>, action_key: ActionKey) -> ActionableElement {
        ActionableElement {
            index,
            source: if action_key.is_global() { ElementSource::Global } else { ElementSource::Hierarchy },
            class_or_kind: class.into(),
            text: text.map(String::from),
            content_desc: None,
            resource_id: None,
            semantic_caption: None,
            bounds: Rect::new(0, 0, 10, 10),
            action_key,
        }
    }

    fn ctx(n: usize) -> PromptContext {
        PromptContext {
            activity: "Main".into(),
            fingerprint: "abc123".into(),
            visits: 1,
            score: 0.1,
            options: (0..n)
                .map(|i| ContextOption {
                    element: element(i, "Button", Some("x"), ActionKey::Tap(i)),
                    successor: None,
                    component_match: false,
                    network_match: false,
                })
                .collect(),
            knowledge: vec![],
            local_map: vec![],
            history: vec![],
            experiences: vec![],
        }
    }

    struct Canned(Mutex<Vec<String>>);

    impl DecisionBackend for Canned {
        fn reply(&self, _: &RenderedPrompt, _: &PromptContext, _: Option<&str>) -> Result<String, BackendError> {
            Ok(self.0.lock().unwrap().remove(0))
        }
    }

    #[test]
    fn empty_context_renders_four_marked_sections() {
        let mut c = ctx(0);
        c.visits = 0;
        let p = render_prompt(&c);
        assert!(sections_in_order(&p.integrated));
        assert_eq!(p.integrated.matches(EMPTY).count(), 4);
    }

    #[test]
    fn parses_object_inside_chatter() {
        let d = parse_decision("Sure! {\"reasoning\": \"a {b}\", \"ad_score\": 0.8, \"choice\": 7}\" done").unwrap();
        assert_eq!((d.choice, d.ad_score, d.reasoning.as_str()), (7, 0.8, "a {b}"));
        assert_eq!(parse_decision(""), Err(PolicyError::Unparseable));
        assert_eq!(parse_decision("{\"choice\": 1}"), Err(PolicyError::Unparseable));
    }

    #[test]
    fn out_of_range_replies_trigger_one_reprompt_then_fallback() {
        let b = Canned(Mutex::new(vec![
            "{\"choice\": 99, \"ad_score\": 0.1}".into(),
            "{\"choice\": 2, \"ad_score\": 0.3}".into(),
        ]));
        let c = ctx(13);
        let d = decide(&render_prompt(&c), &c, &b).unwrap();
        assert_eq!((d.choice, d.fallback), (2, false));

        let b = Canned(Mutex::new(vec!["{\"choice\": 0, \"ad_score\": 1.7}".into(), "nope".into()]));
        let mut c = ctx(3);
        c.options[0].successor = Some(Successor { state: "s".into(), visits: 4, score: 0.1 });
        let d = decide(&render_prompt(&c), &c, &b).unwrap();
        assert!(d.fallback);
        assert_eq!((d.choice, d.ad_score), (1, 0.1));
    }

    #[test]
    fn option_lines_follow_metadata_precedence() {
        let mut e = element(1, "android.widget.ListView", None, ActionKey::Tap(1));
        e.resource_id = Some("pkg:id/list1".into());
        assert_eq!(option_line(&e), "- View 1: Type='ListView', Res-ID='pkg:id/list1'");
        e.resource_id = None;
        assert_eq!(option_line(&e), "- View 1: Type='ListView', Text='N/A'");
        e.semantic_caption = Some(crate::perception::CaptionTag {
            tag: crate::app_model::AdTag::Ad,
            description: "A play button".into(),
        });
        assert_eq!(option_line(&e), "- View 1: Type='ListView', Text='[AD] A play button'");
        let back = element(12, "BackButton", None, ActionKey::Back);
        assert_eq!(option_line(&back), "- View 12: Type='BackButton', Text='[BACK] Return to previous screen'");
    }
}
