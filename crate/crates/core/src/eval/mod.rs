//! Baseline policies, the semantic-gain-minus-revisit criterion, the
//! structural-loop coverage experiment, and corpus campaigns.

mod campaign;
mod family;

pub use campaign::{
    run_campaign_on, Services,
    load_manifest, run_campaign, AppRow, BackendSpec, CampaignError, CampaignReport, CampaignSpec, CorpusApp,
    CorpusManifest, PolicyKind, PolicySummary, TypeTally,
};
pub use family::{
    aliased_loop_app, coverage_experiment, escape_threshold, sign_test_p, CoverageSpec, CoverageStats, FamilyError,
    family_episode, first_exit_step, LoopFamily, PairedComparison, PolicyCoverage, FAMILY_POLICIES,
};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::app_model::{ActionKey, AdTag, AppBundle, Rendering};
use crate::memory::tokenize;
use crate::navigator::Policy;
use crate::perception::{ActionableElement, ElementSource};
use crate::policy::{ContextOption, Decision, PolicyError, PromptContext, RenderedPrompt};

fn pick(choice: usize, reasoning: impl Into<String>) -> (Decision, Option<RenderedPrompt>) {
    (Decision { choice, ad_score: 0.0, reasoning: reasoning.into(), fallback: false }, None)
}

fn ensure_options(ctx: &PromptContext) -> Result<usize, PolicyError> {
    match ctx.options.len() {
        0 => Err(PolicyError::NoOptions),
        n => Ok(n),
    }
}

/// Uniform choice over `n` options.
pub fn policy_random(n: usize, rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(0..n)
}

/// Monkey-style uniform random events.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn choose(&mut self, ctx: &PromptContext) -> Result<(Decision, Option<RenderedPrompt>), PolicyError> {
        let n = ensure_options(ctx)?;
        Ok(pick(policy_random(n, &mut self.rng), "uniform random"))
    }
}

/// Unknown successors first, then the least-visited one; ties by index.
pub fn policy_bfs(options: &[ContextOption]) -> Option<usize> {
    options
        .iter()
        .enumerate()
        .min_by_key(|(i, o)| (o.successor.as_ref().map_or((0, 0), |s| (1, s.visits)), *i))
        .map(|(i, _)| i)
}

/// Breadth-first exploration over the runtime state model.
#[derive(Default)]
pub struct BfsPolicy;

impl Policy for BfsPolicy {
    fn name(&self) -> &str {
        "bfs"
    }

    fn choose(&mut self, ctx: &PromptContext) -> Result<(Decision, Option<RenderedPrompt>), PolicyError> {
        ensure_options(ctx)?;
        Ok(pick(policy_bfs(&ctx.options).expect("non-empty"), "least visited successor"))
    }
}

pub const DEFAULT_KEYWORDS: &[&str] = &[
    "ad", "ads", "advertisement", "sponsored", "install now", "install", "learn more", "download", "free", "promo",
    "offer",
];

/// Number of keywords found in an element's text, resource id and class.
pub fn keyword_hits(e: &ActionableElement, keywords: &[String]) -> usize {
    if e.source == ElementSource::Global {
        return 0;
    }
    let mut text = e.class_or_kind.rsplit('.').next().unwrap_or("").to_string();
    for part in [e.text.as_deref(), e.content_desc.as_deref(), e.resource_id.as_deref()].into_iter().flatten() {
        text.push(' ');
        text.push_str(part);
    }
    let padded = format!(" {} ", tokenize(&text).join(" "));
    keywords
        .iter()
        .map(|k| tokenize(k).join(" "))
        .filter(|k| !k.is_empty() && padded.contains(&format!(" {k} ")))
        .count()
}

/// Most keyword hits, ties by index; `None` when nothing matches.
pub fn policy_keyword(options: &[ContextOption], keywords: &[String]) -> Option<usize> {
    options
        .iter()
        .enumerate()
        .map(|(i, o)| (keyword_hits(&o.element, keywords), i))
        .filter(|(h, _)| *h > 0)
        .min_by_key(|(h, i)| (std::cmp::Reverse(*h), *i))
        .map(|(_, i)| i)
}

/// Ad-keyword prioritization with a random fallback.
pub struct KeywordPolicy {
    keywords: Vec<String>,
    rng: ChaCha8Rng,
}

impl KeywordPolicy {
    pub fn new(seed: u64) -> Self {
        Self::with_keywords(DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(), seed)
    }

    pub fn with_keywords(keywords: Vec<String>, seed: u64) -> Self {
        Self { keywords, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for KeywordPolicy {
    fn name(&self) -> &str {
        "keyword"
    }

    fn choose(&mut self, ctx: &PromptContext) -> Result<(Decision, Option<RenderedPrompt>), PolicyError> {
        let n = ensure_options(ctx)?;
        Ok(match policy_keyword(&ctx.options, &self.keywords) {
            Some(i) => pick(i, "keyword match"),
            None => pick(policy_random(n, &mut self.rng), "no keyword; random"),
        })
    }
}

/// Caption-tag values used when semantic gain comes from captions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagValues {
    pub ad: f64,
    pub potential_ad: f64,
    pub ui_element: f64,
    /// Non-global elements without a caption.
    pub uncaptioned: f64,
}

impl Default for TagValues {
    fn default() -> Self {
        Self { ad: 0.9, potential_ad: 0.6, ui_element: 0.1, uncaptioned: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RSemSource {
    /// Per-action gains authored into the bundle.
    Scripted,
    CaptionDerived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriterionConfig {
    pub lambda: f64,
    pub r_sem_source: RSemSource,
    pub tag_values: TagValues,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self { lambda: 0.1, r_sem_source: RSemSource::Scripted, tag_values: TagValues::default() }
    }
}

/// `r_sem - lambda * visits(successor)`, zero visits for unknown successors.
pub fn criterion_step_value(option: &ContextOption, r_sem: f64, lambda: f64) -> f64 {
    r_sem - lambda * option.successor.as_ref().map_or(0, |s| s.visits) as f64
}

/// Authored gains keyed by screen fingerprint and action.
#[derive(Clone, Debug, Default)]
pub struct GainTable {
    gains: HashMap<(String, ActionKey), f64>,
}

impl GainTable {
    pub fn from_bundle(bundle: &AppBundle) -> Self {
        let mut gains = HashMap::new();
        for (state, screen) in &bundle.rendering {
            let Some(obs) = bundle.observe_state(state, 0.0) else { continue };
            let fp = obs.state_fingerprint;
            match &screen.rendering {
                Rendering::Hierarchy(specs) => {
                    for s in specs {
                        if let Some(g) = s.gain {
                            gains.entry((fp.clone(), ActionKey::Tap(s.widget.index))).or_insert(g);
                        }
                    }
                }
                Rendering::Canvas { regions, .. } => {
                    for r in regions {
                        if let Some(g) = r.gain {
                            gains.entry((fp.clone(), ActionKey::TapRegion(r.index))).or_insert(g);
                        }
                    }
                }
            }
        }
        Self { gains }
    }

    pub fn gain(&self, fingerprint: &str, action: &ActionKey) -> Option<f64> {
        self.gains.get(&(fingerprint.to_string(), action.clone())).copied()
    }
}

/// Argmax of [`criterion_step_value`], ties by index.
pub struct CriterionPolicy {
    pub config: CriterionConfig,
    gains: GainTable,
}

impl CriterionPolicy {
    pub fn new(config: CriterionConfig, bundle: Option<&AppBundle>) -> Self {
        Self { config, gains: bundle.map(GainTable::from_bundle).unwrap_or_default() }
    }

    pub fn r_sem(&self, fingerprint: &str, e: &ActionableElement) -> f64 {
        if e.source == ElementSource::Global {
            return 0.0;
        }
        match self.config.r_sem_source {
            RSemSource::Scripted => self.gains.gain(fingerprint, &e.action_key).unwrap_or(0.0),
            RSemSource::CaptionDerived => {
                let t = &self.config.tag_values;
                match e.semantic_caption.as_ref().map(|c| c.tag) {
                    Some(AdTag::Ad) => t.ad,
                    Some(AdTag::PotentialAd) => t.potential_ad,
                    Some(AdTag::UiElement) => t.ui_element,
                    None => t.uncaptioned,
                }
            }
        }
    }
}

impl Policy for CriterionPolicy {
    fn name(&self) -> &str {
        "criterion"
    }

    fn choose(&mut self, ctx: &PromptContext) -> Result<(Decision, Option<RenderedPrompt>), PolicyError> {
        ensure_options(ctx)?;
        let mut best = (0, f64::NEG_INFINITY, 0.0);
        for (i, o) in ctx.options.iter().enumerate() {
            let r = self.r_sem(&ctx.fingerprint, &o.element);
            let v = criterion_step_value(o, r, self.config.lambda);
            if v > best.1 {
                best = (i, v, r);
            }
        }
        let top = ctx.options.iter().map(|o| self.r_sem(&ctx.fingerprint, &o.element)).fold(0.0, f64::max);
        let (choice, value, r) = best;
        Ok((
            Decision {
                choice,
                ad_score: top.clamp(0.0, 1.0),
                reasoning: format!("value {value:.3} = gain {r:.3} - penalty"),
                fallback: false,
            },
            None,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::Rect;
    use crate::policy::Successor;

    fn opt(i: usize, text: &str, visits: Option<u64>) -> ContextOption {
        ContextOption {
            element: ActionableElement {
                index: i,
                source: ElementSource::Hierarchy,
                class_or_kind: "android.widget.TextView".into(),
                text: Some(text.into()),
                content_desc: None,
                resource_id: None,
                semantic_caption: None,
                bounds: Rect::new(0, 0, 1, 1),
                action_key: ActionKey::Tap(i),
            },
            successor: visits.map(|v| Successor { state: format!("s{i}"), visits: v, score: 0.1 }),
            component_match: false,
            network_match: false,
        }
    }

    fn kw() -> Vec<String> {
        DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bfs_prefers_unknown_then_least_visited() {
        assert_eq!(policy_bfs(&[opt(0, "a", None), opt(1, "b", None)]), Some(0));
        assert_eq!(policy_bfs(&[opt(0, "a", Some(1)), opt(1, "b", None), opt(2, "c", Some(0))]), Some(1));
        assert_eq!(policy_bfs(&[opt(0, "a", Some(3)), opt(1, "b", Some(2))]), Some(1));
    }

    #[test]
    fn keyword_ranking() {
        assert_eq!(policy_keyword(&[opt(0, "Settings", None), opt(1, "Learn More", None)], &kw()), Some(1));
        assert_eq!(policy_keyword(&[opt(0, "Settings", None)], &kw()), None);
        assert_eq!(policy_keyword(&[opt(0, "Free", None), opt(1, "Promo", None)], &kw()), Some(0));
        // "Add" and "Load" are not the keyword "ad".
        assert_eq!(policy_keyword(&[opt(0, "Add item", None), opt(1, "Load", None)], &kw()), None);
    }

    #[test]
    fn criterion_value_hand_cases() {
        assert_eq!(criterion_step_value(&opt(0, "x", None), 0.7, 0.1), 0.7);
        assert_eq!(criterion_step_value(&opt(0, "x", Some(9)), 0.7, 0.0), 0.7);
        assert!((criterion_step_value(&opt(0, "x", Some(3)), 0.5, 0.1) - 0.2).abs() < 1e-12);
    }
}
