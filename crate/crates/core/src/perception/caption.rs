use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{AdTag, AppBundle, Rect, Rendering, VisualLabel, Widget};

pub const CAPTION_INSTRUCTION: &str = "You will see numbered crops of a mobile app screen. \
For each crop, describe the element in a few words and prefix the description with one label: \
[AD] for an advertisement or something that opens one, \
[POTENTIAL_AD] for an element that plausibly leads to promotional content, \
[UI_ELEMENT] for ordinary app interface. \
Reply with a JSON array of objects {\"id\": <crop number>, \"description\": \"[LABEL] text\"} and nothing else.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionTag {
    pub tag: AdTag,
    pub description: String,
}

impl fmt::Display for CaptionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.tag, self.description)
    }
}

impl From<&VisualLabel> for CaptionTag {
    fn from(v: &VisualLabel) -> Self {
        Self { tag: v.tag, description: v.description.clone() }
    }
}

impl CaptionTag {
    /// Parses `"[TAG] description"`.
    pub fn parse(text: &str) -> Option<CaptionTag> {
        let text = text.trim();
        let rest = text.strip_prefix('[')?;
        let (tag, description) = rest.split_once(']')?;
        let tag = match tag.trim() {
            "AD" => AdTag::Ad,
            "POTENTIAL_AD" => AdTag::PotentialAd,
            "UI_ELEMENT" => AdTag::UiElement,
            _ => return None,
        };
        Some(CaptionTag { tag, description: description.trim().to_string() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionTarget {
    pub id: usize,
    pub bounds: Rect,
    /// Reference to the image crop (`<fingerprint>@l,t,r,b`).
    pub crop_ref: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub state_fingerprint: String,
    pub activity: String,
    pub instruction: String,
    pub targets: Vec<CaptionTarget>,
}

impl CaptionRequest {
    pub fn new(state_fingerprint: &str, activity: &str, bounds: &[Rect]) -> Self {
        let targets = bounds
            .iter()
            .enumerate()
            .map(|(id, b)| CaptionTarget {
                id,
                bounds: *b,
                crop_ref: format!("{state_fingerprint}@{},{},{},{}", b.left, b.top, b.right, b.bottom),
            })
            .collect();
        Self {
            state_fingerprint: state_fingerprint.to_string(),
            activity: activity.to_string(),
            instruction: CAPTION_INSTRUCTION.to_string(),
            targets,
        }
    }

    /// Plain-text rendering for chat-style backends.
    pub fn to_prompt(&self) -> String {
        let mut out = format!("{}\n\nScreen {} ({})\n", self.instruction, self.state_fingerprint, self.activity);
        for t in &self.targets {
            out.push_str(&format!("Crop {}: {}\n", t.id, t.crop_ref));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaptionError {
    #[error("captioner transport failure: {0}")]
    Transport(String),
    #[error("malformed caption reply: {0}")]
    Malformed(String),
}

/// Vision captioning port. Returns the raw reply text.
pub trait VisionCaptioner: Send + Sync {
    fn caption(&self, request: &CaptionRequest) -> Result<String, CaptionError>;
}

#[derive(Deserialize)]
struct ReplyItem {
    id: usize,
    description: String,
}

/// Extracts one tag per target from a reply, tolerating surrounding text.
pub fn parse_caption_reply(reply: &str, expected: usize) -> Result<Vec<CaptionTag>, CaptionError> {
    for (pos, _) in reply.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&reply[pos..]).into_iter::<Vec<ReplyItem>>();
        let Some(Ok(items)) = stream.next() else { continue };
        let mut tags: Vec<Option<CaptionTag>> = vec![None; expected];
        for item in items {
            let tag = CaptionTag::parse(&item.description)
                .ok_or_else(|| CaptionError::Malformed(format!("untagged description '{}'", item.description)))?;
            if let Some(slot) = tags.get_mut(item.id) {
                *slot = Some(tag);
            }
        }
        return tags
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| CaptionError::Malformed(format!("no description for crop {i}"))))
            .collect();
    }
    Err(CaptionError::Malformed("no JSON array in reply".into()))
}

/// Captions the targets, retrying once on a bad reply. Second failure
/// tags every target as plain interface, preserving the raw text.
pub fn caption(request: &CaptionRequest, captioner: &dyn VisionCaptioner) -> Vec<CaptionTag> {
    let n = request.targets.len();
    let mut last_raw = String::new();
    for attempt in 0..2 {
        match captioner.caption(request).and_then(|raw| {
            last_raw = raw.clone();
            parse_caption_reply(&raw, n)
        }) {
            Ok(tags) => return tags,
            Err(e) => tracing::warn!(attempt, error = %e, "caption reply rejected"),
        }
    }
    vec![CaptionTag { tag: AdTag::UiElement, description: last_raw.trim().to_string() }; n]
}

enum ScreenLabels {
    Hierarchy(Vec<(Widget, Option<VisualLabel>)>),
    Canvas(Vec<(Rect, VisualLabel)>),
}

/// Captioner that answers from the bundle's hidden visual labels, looked
/// up by screen fingerprint and crop bounds.
pub struct ScriptedCaptioner {
    screens: HashMap<String, ScreenLabels>,
}

impl ScriptedCaptioner {
    pub fn new(bundle: &Arc<AppBundle>) -> Self {
        Self::from_bundles(std::slice::from_ref(bundle))
    }

    pub fn from_bundles(bundles: &[Arc<AppBundle>]) -> Self {
        let mut screens = HashMap::new();
        for bundle in bundles {
            for (state, screen) in &bundle.rendering {
                let Some(obs) = bundle.observe_state(state, 0.0) else { continue };
                let labels = match &screen.rendering {
                    Rendering::Hierarchy(specs) => {
                        ScreenLabels::Hierarchy(specs.iter().map(|s| (s.widget.clone(), s.visual.clone())).collect())
                    }
                    Rendering::Canvas { regions, .. } => {
                        ScreenLabels::Canvas(regions.iter().map(|r| (r.bounds, r.visual.clone())).collect())
                    }
                };
                screens.insert(obs.state_fingerprint, labels);
            }
        }
        Self { screens }
    }

    fn label_for(&self, fingerprint: &str, bounds: &Rect) -> CaptionTag {
        let plain = |d: String| CaptionTag { tag: AdTag::UiElement, description: d };
        match self.screens.get(fingerprint) {
            Some(ScreenLabels::Hierarchy(widgets)) => match widgets.iter().find(|(w, _)| w.bounds == *bounds) {
                Some((_, Some(v))) => v.into(),
                Some((w, None)) => plain(match w.label() {
                    Some(l) => format!("{} showing '{}'", w.short_class(), l),
                    None => format!("plain {}", w.short_class()),
                }),
                None => plain("blank area".into()),
            },
            Some(ScreenLabels::Canvas(regions)) => {
                let (cx, cy) = bounds.center();
                regions
                    .iter()
                    .filter(|(r, _)| r.contains_point(cx, cy))
                    .min_by_key(|(r, _)| r.area())
                    .map_or_else(|| plain("background area".into()), |(_, v)| v.into())
            }
            None => plain("unrecognized screen".into()),
        }
    }
}

impl VisionCaptioner for ScriptedCaptioner {
    fn caption(&self, request: &CaptionRequest) -> Result<String, CaptionError> {
        let items: Vec<serde_json::Value> = request
            .targets
            .iter()
            .map(|t| {
                serde_json::json!({
                    "id": t.id,
                    "description": self.label_for(&request.state_fingerprint, &t.bounds).to_string(),
                })
            })
            .collect();
        Ok(serde_json::Value::Array(items).to_string())
    }
}
