//! Turns raw observations from either rendering mode into one actionable
//! element list, invoking the vision captioner only where metadata fails.

mod caption;
mod detect;

pub use caption::{
    caption, parse_caption_reply, CaptionError, CaptionRequest, CaptionTag, CaptionTarget, ScriptedCaptioner,
    VisionCaptioner, CAPTION_INSTRUCTION,
};
pub use detect::{
    consolidate_regions, Detection, DetectorError, GroundTruthDetector, HeuristicAnalyzer, HybridDetector,
    ProposalOrigin, RegionDetector, RegionProposal,
};

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::app_model::{non_empty, ActionKey, Rect, RenderMode, UiState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSource {
    Hierarchy,
    Region,
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionableElement {
    pub index: usize,
    pub source: ElementSource,
    pub class_or_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_caption: Option<CaptionTag>,
    pub bounds: Rect,
    pub action_key: ActionKey,
}

impl ActionableElement {
    pub fn short_class(&self) -> &str {
        self.class_or_kind.rsplit('.').next().unwrap_or(&self.class_or_kind)
    }

    /// Visible label: text, falling back to the content description.
    pub fn label(&self) -> Option<&str> {
        non_empty(self.text.as_deref()).or_else(|| non_empty(self.content_desc.as_deref()))
    }

    /// Canonical edge label for firing this element on state `fp`.
    pub fn event_descriptor(&self, fp: &str) -> String {
        let b = self.bounds;
        let bbox = format!("{},{},{},{}", b.left, b.top, b.right, b.bottom);
        match (&self.action_key, self.source) {
            (ActionKey::Back, _) => format!("KeyEvent(state={fp}, name=BACK)"),
            (ActionKey::Scroll, _) => format!("ScrollEvent(state={fp}, direction=DOWN)"),
            (ActionKey::Restart, _) => restart_descriptor(),
            (_, ElementSource::Region) => format!("TouchEvent(state={fp}, region=[{bbox}])"),
            _ => match self.label() {
                Some(label) if self.short_class().ends_with("Button") => format!(
                    "TouchEvent(state={fp}, view=[button alt='{label}' bound_box={bbox}][/button])"
                ),
                label => format!(
                    "TouchEvent(state={fp}, view=[{bbox}-{}-{}])",
                    self.short_class(),
                    label.unwrap_or("")
                ),
            },
        }
    }

    fn global(action_key: ActionKey, screen: Rect) -> Self {
        let kind = match action_key {
            ActionKey::Back => "BackButton",
            _ => "ScrollAction",
        };
        Self {
            index: 0,
            source: ElementSource::Global,
            class_or_kind: kind.into(),
            text: None,
            content_desc: None,
            resource_id: None,
            semantic_caption: None,
            bounds: screen,
            action_key,
        }
    }
}

pub fn restart_descriptor() -> String {
    "RestartAppEvent()".to_string()
}

fn reindex(mut elements: Vec<ActionableElement>) -> Vec<ActionableElement> {
    for (i, e) in elements.iter_mut().enumerate() {
        e.index = i;
    }
    elements
}

/// Clickable widgets in document order, then `back`, then `scroll` when
/// any widget scrolls.
pub fn normalize_hierarchy(state: &UiState) -> Vec<ActionableElement> {
    let mut out: Vec<ActionableElement> = state
        .widgets
        .iter()
        .filter(|w| w.clickable)
        .map(|w| ActionableElement {
            index: 0,
            source: ElementSource::Hierarchy,
            class_or_kind: w.class.clone(),
            text: w.text.clone(),
            content_desc: w.content_desc.clone(),
            resource_id: w.resource_id.clone(),
            semantic_caption: None,
            bounds: w.bounds,
            action_key: ActionKey::Tap(w.index),
        })
        .collect();
    out.push(ActionableElement::global(ActionKey::Back, state.screen_bounds));
    if state.widgets.iter().any(|w| w.scrollable) {
        out.push(ActionableElement::global(ActionKey::Scroll, state.screen_bounds));
    }
    reindex(out)
}

/// Region proposals become taps dispatched to whatever is painted under
/// their center; proposals over bare background get taps that do nothing.
pub fn normalize_canvas(state: &UiState, proposals: &[RegionProposal]) -> Vec<ActionableElement> {
    let mut out = Vec::new();
    let mut hit = BTreeSet::new();
    let mut dead = state.canvas_regions.len();
    for p in proposals {
        let (cx, cy) = p.bounds.center();
        let key = match state.region_at(cx, cy) {
            Some(r) if hit.insert(r.index) => ActionKey::TapRegion(r.index),
            Some(_) => continue,
            None => {
                dead += 1;
                ActionKey::TapRegion(dead - 1)
            }
        };
        out.push(ActionableElement {
            index: 0,
            source: ElementSource::Region,
            class_or_kind: "Region".into(),
            text: None,
            content_desc: None,
            resource_id: None,
            semantic_caption: None,
            bounds: p.bounds,
            action_key: key,
        });
    }
    out.push(ActionableElement::global(ActionKey::Back, state.screen_bounds));
    reindex(out)
}

/// Whether an element needs a vision caption: always on canvas screens,
/// and on hierarchy screens only for media containers without any text.
pub fn should_invoke_vlm(element: &ActionableElement, mode: RenderMode, media_classes: &[String]) -> bool {
    match (element.source, mode) {
        (ElementSource::Global, _) => false,
        (_, RenderMode::Canvas) => true,
        (_, RenderMode::Hierarchy) => {
            element.label().is_none() && media_classes.iter().any(|c| c == element.short_class())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlmPolicy {
    Selective,
    Always,
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub iou_threshold: f64,
    pub media_classes: Vec<String>,
    pub vlm_policy: VlmPolicy,
    pub grid_px: i32,
    pub detector_recall: f64,
    pub detector_noise: f64,
    pub detector_seed: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            media_classes: ["ImageView", "ImageButton", "WebView"].iter().map(|s| s.to_string()).collect(),
            vlm_policy: VlmPolicy::Selective,
            grid_px: 20,
            detector_recall: 1.0,
            detector_noise: 0.0,
            detector_seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerceptionStats {
    pub frames: u64,
    /// Elements sent to the captioner.
    pub captioned_elements: u64,
    pub captioner_requests: u64,
    pub degraded_frames: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub elements: Vec<ActionableElement>,
    pub degraded: bool,
}

pub struct Perception {
    config: PerceptionConfig,
    detector: HybridDetector,
    captioner: Option<Arc<dyn VisionCaptioner>>,
    cache: HashMap<(String, Rect), CaptionTag>,
    stats: PerceptionStats,
}

impl Perception {
    pub fn new(config: PerceptionConfig, captioner: Option<Arc<dyn VisionCaptioner>>) -> Self {
        let detector = HybridDetector {
            deep: Some(Box::new(GroundTruthDetector {
                recall: config.detector_recall,
                noise: config.detector_noise,
                seed: config.detector_seed,
                ..GroundTruthDetector::default()
            })),
            heuristic: Some(HeuristicAnalyzer { grid_px: config.grid_px, ..HeuristicAnalyzer::default() }),
            iou_threshold: config.iou_threshold,
        };
        Self::with_detector(config, detector, captioner)
    }

    pub fn with_detector(
        config: PerceptionConfig,
        detector: HybridDetector,
        captioner: Option<Arc<dyn VisionCaptioner>>,
    ) -> Self {
        Self { config, detector, captioner, cache: HashMap::new(), stats: PerceptionStats::default() }
    }

    pub fn config(&self) -> &PerceptionConfig {
        &self.config
    }

    pub fn stats(&self) -> &PerceptionStats {
        &self.stats
    }

    pub fn perceive(&mut self, state: &UiState) -> Observation {
        self.stats.frames += 1;
        let (mut elements, degraded) = match state.mode {
            RenderMode::Hierarchy => (normalize_hierarchy(state), false),
            RenderMode::Canvas => {
                let d = self.detector.detect_regions(state);
                (normalize_canvas(state, &d.proposals), d.degraded)
            }
        };
        if degraded {
            self.stats.degraded_frames += 1;
        }
        self.annotate(state, &mut elements);
        Observation { elements, degraded }
    }

    fn annotate(&mut self, state: &UiState, elements: &mut [ActionableElement]) {
        let Some(captioner) = self.captioner.clone() else { return };
        let wanted: Vec<usize> = elements
            .iter()
            .filter(|e| match self.config.vlm_policy {
                VlmPolicy::Never => false,
                VlmPolicy::Always => e.source != ElementSource::Global,
                VlmPolicy::Selective => should_invoke_vlm(e, state.mode, &self.config.media_classes),
            })
            .map(|e| e.index)
            .collect();
        let fp = &state.state_fingerprint;
        let missing: Vec<usize> =
            wanted.iter().copied().filter(|i| !self.cache.contains_key(&(fp.clone(), elements[*i].bounds))).collect();
        if !missing.is_empty() {
            let bounds: Vec<Rect> = missing.iter().map(|i| elements[*i].bounds).collect();
            let request = CaptionRequest::new(fp, &state.activity, &bounds);
            let tags = caption(&request, captioner.as_ref());
            self.stats.captioner_requests += 1;
            self.stats.captioned_elements += missing.len() as u64;
            for (b, t) in bounds.into_iter().zip(tags) {
                self.cache.insert((fp.clone(), b), t);
            }
        }
        for i in wanted {
            elements[i].semantic_caption = self.cache.get(&(fp.clone(), elements[i].bounds)).cloned();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::{AdTag, GroundTruthRegion, VisualLabel, Widget};

    fn widget(index: usize, class: &str, text: Option<&str>, clickable: bool) -> Widget {
        Widget {
            index,
            class: class.into(),
            text: text.map(String::from),
            content_desc: None,
            resource_id: None,
            bounds: Rect::new(0, index as i32 * 100, 500, index as i32 * 100 + 90),
            clickable,
            scrollable: false,
            depth: 1,
        }
    }

    fn hierarchy_state(widgets: Vec<Widget>) -> UiState {
        UiState {
            state_fingerprint: "abc123".into(),
            activity: "Main".into(),
            mode: RenderMode::Hierarchy,
            external: false,
            widgets,
            canvas_regions: vec![],
            canvas_contours: vec![],
            screen_bounds: Rect::new(0, 0, 1080, 2340),
            clock_seconds: 0.0,
        }
    }

    fn region(index: usize, bounds: Rect) -> GroundTruthRegion {
        GroundTruthRegion {
            index,
            bounds,
            kind: "button".into(),
            visual: VisualLabel { tag: AdTag::UiElement, description: "x".into() },
            gain: None,
        }
    }

    #[test]
    fn no_clickables_leaves_only_globals() {
        let s = hierarchy_state(vec![widget(0, "android.widget.TextView", Some("hi"), false)]);
        let e = normalize_hierarchy(&s);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].action_key, ActionKey::Back);
    }

    #[test]
    fn scroll_appears_only_with_scrollable_widget() {
        let mut w = widget(0, "android.widget.ListView", None, true);
        w.scrollable = true;
        let e = normalize_hierarchy(&hierarchy_state(vec![w]));
        let keys: Vec<String> = e.iter().map(|e| e.action_key.to_string()).collect();
        assert_eq!(keys, ["tap:0", "back", "scroll"]);
        assert_eq!(e.iter().map(|e| e.index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn identical_metadata_widgets_stay_distinct() {
        let s = hierarchy_state(vec![
            widget(0, "android.widget.ImageView", None, true),
            widget(1, "android.widget.ImageView", None, true),
        ]);
        let e = normalize_hierarchy(&s);
        assert_ne!(e[0].bounds, e[1].bounds);
        assert_eq!((&e[0].class_or_kind, &e[0].text), (&e[1].class_or_kind, &e[1].text));
        assert_ne!(e[0].action_key, e[1].action_key);
    }

    #[test]
    fn vlm_rule() {
        let media = PerceptionConfig::default().media_classes;
        let s = hierarchy_state(vec![
            widget(0, "android.widget.Button", Some("Rate"), true),
            widget(1, "android.widget.ImageView", None, true),
            widget(2, "android.widget.ImageView", Some(""), true),
        ]);
        let e = normalize_hierarchy(&s);
        assert!(!should_invoke_vlm(&e[0], RenderMode::Hierarchy, &media));
        assert!(should_invoke_vlm(&e[1], RenderMode::Hierarchy, &media));
        assert!(should_invoke_vlm(&e[2], RenderMode::Hierarchy, &media));
        assert!(!should_invoke_vlm(&e[3], RenderMode::Hierarchy, &media));
        let mut r = e[0].clone();
        r.source = ElementSource::Region;
        assert!(should_invoke_vlm(&r, RenderMode::Canvas, &media));
    }

    #[test]
    fn identity_detector_reports_all_regions() {
        let mut s = hierarchy_state(vec![]);
        s.mode = RenderMode::Canvas;
        s.canvas_regions = (0..5).map(|i| region(i, Rect::new(0, i as i32 * 200, 300, i as i32 * 200 + 150))).collect();
        let d = GroundTruthDetector::default().detect(&s).unwrap();
        let got: Vec<Rect> = d.iter().map(|p| p.bounds).collect();
        let want: Vec<Rect> = s.canvas_regions.iter().map(|r| r.bounds).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn half_recall_keeps_exactly_half() {
        let mut s = hierarchy_state(vec![]);
        s.mode = RenderMode::Canvas;
        s.canvas_regions = (0..20).map(|i| region(i, Rect::new(0, i as i32 * 100, 300, i as i32 * 100 + 80))).collect();
        let det = GroundTruthDetector { recall: 0.5, seed: 7, ..Default::default() };
        let a = det.detect(&s).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, det.detect(&s).unwrap());
    }

    struct Failing;
    impl RegionDetector for Failing {
        fn detect(&self, _: &UiState) -> Result<Vec<RegionProposal>, DetectorError> {
            Err(DetectorError("model missing".into()))
        }
    }

    #[test]
    fn failing_detector_degrades_to_heuristic() {
        let mut s = hierarchy_state(vec![]);
        s.mode = RenderMode::Canvas;
        s.canvas_contours = vec![Rect::new(13, 13, 95, 77), Rect::new(90, 70, 150, 130), Rect::new(500, 500, 600, 600)];
        let h = HybridDetector { deep: Some(Box::new(Failing)), ..HybridDetector::default() };
        let d = h.detect_regions(&s);
        assert!(d.degraded);
        let boxes: Vec<Rect> = d.proposals.iter().map(|p| p.bounds).collect();
        assert_eq!(boxes, [Rect::new(0, 0, 160, 140), Rect::new(500, 500, 600, 600)]);
        assert!(d.proposals.iter().all(|p| p.origin == ProposalOrigin::HeuristicAnalyzer));
    }

    #[test]
    fn consolidation_keeps_higher_confidence_duplicate() {
        let b = Rect::new(10, 10, 110, 110);
        let deep = [RegionProposal { bounds: b, confidence: 0.9, origin: ProposalOrigin::DeepDetector }];
        let heur = [
            RegionProposal { bounds: b, confidence: 0.5, origin: ProposalOrigin::HeuristicAnalyzer },
            RegionProposal { bounds: Rect::new(500, 500, 600, 600), confidence: 0.5, origin: ProposalOrigin::HeuristicAnalyzer },
        ];
        let out = consolidate_regions(&deep, &heur, 0.5);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].origin, ProposalOrigin::DeepDetector);
        assert_eq!(consolidate_regions(&deep[..0], &heur[1..], 0.5).len(), 1);
    }

    #[test]
    fn canvas_taps_dispatch_by_hit_test() {
        let mut s = hierarchy_state(vec![]);
        s.mode = RenderMode::Canvas;
        s.canvas_regions = vec![region(0, Rect::new(0, 0, 100, 100)), region(1, Rect::new(200, 0, 300, 100))];
        let props = [
            RegionProposal { bounds: Rect::new(200, 0, 300, 100), confidence: 0.9, origin: ProposalOrigin::DeepDetector },
            RegionProposal { bounds: Rect::new(0, 500, 100, 600), confidence: 0.5, origin: ProposalOrigin::HeuristicAnalyzer },
        ];
        let e = normalize_canvas(&s, &props);
        let keys: Vec<String> = e.iter().map(|e| e.action_key.to_string()).collect();
        assert_eq!(keys, ["tap_region:1", "tap_region:2", "back"]);
    }

    #[test]
    fn caption_reply_parsing() {
        let reply = "Sure: [{\"id\": 1, \"description\": \"[UI_ELEMENT] skull\"}, {\"id\": 0, \"description\": \"[AD] play icon\"}] done";
        let tags = parse_caption_reply(reply, 2).unwrap();
        assert_eq!(tags[0].tag, AdTag::Ad);
        assert_eq!(tags[1].description, "skull");
        assert!(parse_caption_reply("[{\"id\":0,\"description\":\"no tag\"}]", 1).is_err());
        assert!(parse_caption_reply("nothing here", 1).is_err());
    }

    struct Garbage;
    impl VisionCaptioner for Garbage {
        fn caption(&self, _: &CaptionRequest) -> Result<String, CaptionError> {
            Ok("I cannot see the image.".into())
        }
    }

    #[test]
    fn malformed_replies_fall_back_to_plain_tags() {
        let req = CaptionRequest::new("abc", "Main", &[Rect::new(0, 0, 10, 10)]);
        let tags = caption(&req, &Garbage);
        assert_eq!(tags, [CaptionTag { tag: AdTag::UiElement, description: "I cannot see the image.".into() }]);
    }
}
