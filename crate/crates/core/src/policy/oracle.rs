use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ContextOption, DecisionBackend, PromptContext, RenderedPrompt, TRIGGER_MATCH_PREFIX};
use crate::app_model::{ActionKey, AdTag};
use crate::llm::BackendError;
use crate::memory::tokenize;
use crate::perception::ElementSource;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub lambda: f64,
    pub base_value: f64,
    pub strong_cues: Vec<String>,
    pub strong_value: f64,
    pub weak_cues: Vec<String>,
    pub weak_value: f64,
    pub tag_ad: f64,
    pub tag_potential: f64,
    pub tag_ui: f64,
    pub component_bonus: f64,
    pub network_bonus: f64,
    /// Added to options known to stay on the current screen when the
    /// screen's activity holds ad trigger methods; time-gated ads need the
    /// agent to linger.
    pub dwell_bonus: f64,
    pub experience_bonus: f64,
    pub experience_cap: f64,
    pub back_value: f64,
    pub scroll_value: f64,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            base_value: 0.1,
            strong_cues: words(&[
                "ad", "advertisement", "sponsored", "install now", "learn more", "watch video", "free", "reward",
                "bonus", "gift", "promo", "promotion",
            ]),
            strong_value: 0.9,
            weak_cues: words(&[
                "more game", "more app", "other app", "store", "shop", "offer", "premium", "coin", "download",
                "video", "recommend", "play",
            ]),
            weak_value: 0.6,
            tag_ad: 0.9,
            tag_potential: 0.6,
            tag_ui: 0.1,
            component_bonus: 0.2,
            network_bonus: 0.2,
            dwell_bonus: 0.3,
            experience_bonus: 0.1,
            experience_cap: 0.2,
            back_value: 0.0,
            scroll_value: 0.05,
        }
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "with", "or", "and", "of", "to", "in", "on", "for", "that", "often", "trigger", "interacting",
    "element", "button", "view", "lead", "related", "specific", "app",
];

/// Deterministic stand-in for a reasoning model: scores every option from
/// cue words, caption tags, prior matches and remembered lessons, minus a
/// visit-count penalty on its known successor.
#[derive(Clone, Debug, Default)]
pub struct ScriptedOracle {
    pub config: OracleConfig,
}

/// Whole-token phrase match; the last cue word may carry a plain
/// inflection ("recommend" hits "recommended", "ad" does not hit "add").
fn phrase_hit(tokens: &str, cues: &[String]) -> bool {
    let padded = format!(" {tokens} ");
    cues.iter().any(|c| {
        let cue = tokenize(c).join(" ");
        !cue.is_empty() && ["", "s", "es", "ed", "ing"].iter().any(|suf| padded.contains(&format!(" {cue}{suf} ")))
    })
}

impl ScriptedOracle {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }

    /// Semantic gain of an option, before the visit penalty.
    pub fn semantic_value(&self, option: &ContextOption, experience_tokens: &BTreeSet<String>) -> f64 {
        let c = &self.config;
        let e = &option.element;
        if e.source == ElementSource::Global {
            return if e.action_key == ActionKey::Back { c.back_value } else { c.scroll_value };
        }
        let mut text = String::new();
        for part in [e.label(), e.resource_id.as_deref().map(crate::knowledge::short_resource_name)].into_iter().flatten() {
            text.push(' ');
            text.push_str(part);
        }
        if let Some(cap) = &e.semantic_caption {
            text.push(' ');
            text.push_str(&cap.description);
        }
        let tokens = tokenize(&text);
        let joined = tokens.join(" ");
        let mut v = c.base_value;
        if phrase_hit(&joined, &c.strong_cues) {
            v = v.max(c.strong_value);
        } else if phrase_hit(&joined, &c.weak_cues) {
            v = v.max(c.weak_value);
        }
        if let Some(cap) = &e.semantic_caption {
            v = v.max(match cap.tag {
                AdTag::Ad => c.tag_ad,
                AdTag::PotentialAd => c.tag_potential,
                AdTag::UiElement => c.tag_ui,
            });
        }
        if option.component_match {
            v += c.component_bonus;
        }
        if option.network_match {
            v += c.network_bonus;
        }
        let shared = tokens.iter().collect::<BTreeSet<_>>().into_iter().filter(|t| experience_tokens.contains(*t)).count();
        v += (shared as f64 * c.experience_bonus).min(c.experience_cap);
        v.min(1.0)
    }

    /// Per-option values `semantic - lambda * successor visits`.
    pub fn values(&self, ctx: &PromptContext) -> Vec<(f64, f64)> {
        let exp: BTreeSet<String> = ctx
            .experiences
            .iter()
            .flat_map(|e| tokenize(&e.summary))
            .filter(|t| !STOPWORDS.contains(&t.as_str()) && !t.chars().all(|c| c.is_ascii_digit()))
            .collect();
        // Screens the recent history shows an ad on: going back there only
        // repeats a find.
        let exposed: BTreeSet<&str> = ctx.history.iter().filter(|h| h.ad_flag).map(|h| h.to.as_str()).collect();
        let trigger_screen = ctx.knowledge.iter().any(|l| l.starts_with(TRIGGER_MATCH_PREFIX));
        ctx.options
            .iter()
            .map(|o| {
                let repeat = o.successor.as_ref().is_some_and(|s| exposed.contains(s.state.as_str()));
                let mut sem = if repeat { self.config.base_value } else { self.semantic_value(o, &exp) };
                let stays = o.successor.as_ref().is_some_and(|s| s.state == ctx.fingerprint);
                if trigger_screen && stays && o.element.source != ElementSource::Global {
                    sem = (sem + self.config.dwell_bonus).min(1.0);
                }
                let visits = o.successor.as_ref().map_or(0, |s| s.visits);
                (sem, sem - self.config.lambda * visits as f64)
            })
            .collect()
    }
}

impl DecisionBackend for ScriptedOracle {
    fn reply(&self, _prompt: &RenderedPrompt, ctx: &PromptContext, _correction: Option<&str>) -> Result<String, BackendError> {
        let values = self.values(ctx);
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, v)) in values.iter().enumerate() {
            if best.is_none_or(|(_, b)| *v > b) {
                best = Some((i, *v));
            }
        }
        let Some((choice, value)) = best else {
            return Ok("no options".into());
        };
        let ad_score = values.iter().map(|(s, _)| *s).fold(0.0, f64::max).clamp(0.0, 1.0);
        let e = &ctx.options[choice].element;
        let what = e.label().map(str::to_string).or_else(|| e.semantic_caption.as_ref().map(|c| c.description.clone()));
        let reasoning = match what {
            Some(w) => format!("Choosing element {choice}, '{w}' scores {value:.2} after the revisit penalty."),
            None => format!("Choosing element {choice}, a {} scoring {value:.2} after the revisit penalty.", e.short_class()),
        };
        Ok(serde_json::json!({"reasoning": reasoning, "ad_score": (ad_score * 100.0).round() / 100.0, "choice": choice}).to_string())
    }
}
