//! Declarative simulated apps.
//!
//! An [`AppBundle`] is the concrete transition system an explorer is run
//! against: manifest, layout resources and a code summary for static
//! profiling, plus a scripted runtime (screens, transitions, ad triggers and
//! log emissions) driven through a [`Session`]. Explorers only ever see what
//! a [`Session`] hands back as [`UiState`] observations.

mod bundle;
mod session;

pub use bundle::{load_bundle, parse_bundle, BundleError};
pub use session::{LogRecord, Session, SessionConfig, StepOutcome};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StateId = String;

/// Pixel rectangle, serialized as `[left, top, right, bottom]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct Rect {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Rect {
    pub const fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn is_well_ordered(&self) -> bool {
        self.left < self.right && self.top < self.bottom
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    pub fn area(&self) -> i64 {
        if !self.is_well_ordered() {
            return 0;
        }
        self.width() as i64 * self.height() as i64
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn contains_point(&self, x: i32, y: i32) -> bool {
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.left >= self.left
            && other.top >= self.top
            && other.right <= self.right
            && other.bottom <= self.bottom
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(
            self.left.max(other.left),
            self.top.max(other.top),
            self.right.min(other.right),
            self.bottom.min(other.bottom),
        );
        r.is_well_ordered().then_some(r)
    }

    /// Intersection over union; 0 for disjoint or degenerate boxes.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl From<[i32; 4]> for Rect {
    fn from(v: [i32; 4]) -> Self {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [i32; 4] {
    fn from(r: Rect) -> Self {
        [r.left, r.top, r.right, r.bottom]
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.left, self.top, self.right, self.bottom)
    }
}

/// Executable action identifier, uniform across rendering modes.
///
/// Text form: `tap:<widget-index>`, `tap_region:<region-index>`, `back`,
/// `scroll`, `restart`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActionKey {
    Tap(usize),
    TapRegion(usize),
    Back,
    Scroll,
    Restart,
}

impl ActionKey {
    pub fn is_global(&self) -> bool {
        matches!(self, ActionKey::Back | ActionKey::Scroll | ActionKey::Restart)
    }
}

impl fmt::Display for ActionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKey::Tap(i) => write!(f, "tap:{i}"),
            ActionKey::TapRegion(i) => write!(f, "tap_region:{i}"),
            ActionKey::Back => f.write_str("back"),
            ActionKey::Scroll => f.write_str("scroll"),
            ActionKey::Restart => f.write_str("restart"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid action key '{0}'")]
pub struct ParseActionKeyError(pub String);

impl FromStr for ActionKey {
    type Err = ParseActionKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseActionKeyError(s.to_string());
        match s {
            "back" => Ok(ActionKey::Back),
            "scroll" => Ok(ActionKey::Scroll),
            "restart" => Ok(ActionKey::Restart),
            _ => {
                if let Some(rest) = s.strip_prefix("tap_region:") {
                    rest.parse().map(ActionKey::TapRegion).map_err(|_| bad())
                } else if let Some(rest) = s.strip_prefix("tap:") {
                    rest.parse().map(ActionKey::Tap).map_err(|_| bad())
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl TryFrom<String> for ActionKey {
    type Error = ParseActionKeyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ActionKey> for String {
    fn from(a: ActionKey) -> Self {
        a.to_string()
    }
}

/// Semantic category a vision captioner assigns to a UI element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdTag {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "POTENTIAL_AD")]
    PotentialAd,
    #[serde(rename = "UI_ELEMENT")]
    UiElement,
}

impl AdTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdTag::Ad => "AD",
            AdTag::PotentialAd => "POTENTIAL_AD",
            AdTag::UiElement => "UI_ELEMENT",
        }
    }
}

impl fmt::Display for AdTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a vision model would say about an element's pixels. Hidden ground
/// truth: only captioner backends may read it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualLabel {
    pub tag: AdTag,
    pub description: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdType {
    Embedded,
    Popup,
    Custom,
}

impl AdType {
    pub const ALL: [AdType; 3] = [AdType::Embedded, AdType::Popup, AdType::Custom];

    pub fn as_str(&self) -> &'static str {
        match self {
            AdType::Embedded => "embedded",
            AdType::Popup => "popup",
            AdType::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Hierarchy,
    Canvas,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaEntry {
    pub name: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub activities: Vec<String>,
    #[serde(default)]
    pub permissions: Vec<String>,
    #[serde(default)]
    pub metadata: Vec<MetaEntry>,
    /// Activities known to host ads. Ground truth for success checks; never
    /// rendered into agent context.
    #[serde(default)]
    pub registered_success_activities: Vec<String>,
}

impl Manifest {
    pub fn has_activity(&self, name: &str) -> bool {
        self.activities.iter().any(|a| a == name)
    }
}

/// Static layout resource node (`res/layout` XML analogue).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<LayoutNode>,
}

impl LayoutNode {
    /// Preorder walk yielding `(node, depth)`.
    pub fn walk(&self) -> Vec<(&LayoutNode, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(self, 0usize)];
        while let Some((node, depth)) = stack.pop() {
            out.push((node, depth));
            for child in node.children.iter().rev() {
                stack.push((child, depth + 1));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub signature: String,
    /// Fully qualified names of invoked methods.
    #[serde(default)]
    pub invokes: Vec<String>,
    /// Listener interfaces this method implements a callback of.
    #[serde(default)]
    pub implements: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_name: String,
    pub superclass: String,
    #[serde(default)]
    pub methods: Vec<MethodSummary>,
}

const FRAMEWORK_PREFIXES: &[&str] = &["android.", "androidx.", "java.", "javax.", "kotlin.", "dalvik."];

/// Superclasses outside the app's own code.
pub fn is_framework_class(name: &str) -> bool {
    FRAMEWORK_PREFIXES.iter().any(|p| name.starts_with(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEffect {
    pub next_state: StateId,
    #[serde(default)]
    pub delay_seconds: f64,
    #[serde(default)]
    pub crash: bool,
    #[serde(default)]
    pub background: bool,
    /// Ad this transition is authored to reveal. Exposure itself is decided
    /// by the referenced trigger's predicate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad_exposure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: StateId,
    pub action: ActionKey,
    #[serde(flatten)]
    pub effect: TransitionEffect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdTriggerInstance {
    pub ad_id: String,
    pub host_state: StateId,
    /// Actions that must form the suffix of the action history at exposure.
    #[serde(default)]
    pub required_context: Vec<ActionKey>,
    #[serde(default)]
    pub min_dwell_seconds: f64,
    pub ad_type: AdType,
    /// Silent ads raise no exposure flag; they are identifiable only by the
    /// host activity, and their id must be `activity:<host activity>`.
    #[serde(default)]
    pub silent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionLine {
    pub offset_seconds: f64,
    pub tag: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmissionSpec {
    pub from: StateId,
    pub action: ActionKey,
    pub lines: Vec<EmissionLine>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorScript {
    pub initial_state: StateId,
    #[serde(default)]
    pub transitions: Vec<TransitionSpec>,
    #[serde(default)]
    pub ad_triggers: Vec<AdTriggerInstance>,
    #[serde(default)]
    pub emissions: Vec<EmissionSpec>,
    /// Upper bound of the seeded uniform jitter added to emission offsets.
    #[serde(default)]
    pub emission_jitter_seconds: f64,
}

/// Widget as exposed by the accessibility layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    #[serde(default)]
    pub index: usize,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    pub bounds: Rect,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub scrollable: bool,
    #[serde(default)]
    pub depth: u32,
}

impl Widget {
    /// Short class name (`android.widget.ImageView` -> `ImageView`).
    pub fn short_class(&self) -> &str {
        self.class.rsplit('.').next().unwrap_or(&self.class)
    }

    /// Visible label: text, falling back to the content description.
    pub fn label(&self) -> Option<&str> {
        non_empty(self.text.as_deref()).or_else(|| non_empty(self.content_desc.as_deref()))
    }
}

pub(crate) fn non_empty(s: Option<&str>) -> Option<&str> {
    s.filter(|s| !s.trim().is_empty())
}

/// Authored widget: the accessibility view plus hidden annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidgetSpec {
    #[serde(flatten)]
    pub widget: Widget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<VisualLabel>,
    /// Scripted semantic gain of tapping this widget, in [0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

/// Canvas-painted element. Only detector backends may read these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRegion {
    #[serde(default)]
    pub index: usize,
    pub bounds: Rect,
    #[serde(default = "default_region_kind")]
    pub kind: String,
    pub visual: VisualLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

fn default_region_kind() -> String {
    "button".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rendering {
    Hierarchy(Vec<WidgetSpec>),
    Canvas {
        regions: Vec<GroundTruthRegion>,
        /// Coarse visual contours a geometric analyzer would find.
        #[serde(default)]
        contours: Vec<Rect>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub activity: String,
    /// Screen belongs to another app (store page, launcher, browser).
    #[serde(default)]
    pub external: bool,
    pub rendering: Rendering,
}

impl Screen {
    pub fn mode(&self) -> RenderMode {
        match self.rendering {
            Rendering::Hierarchy(_) => RenderMode::Hierarchy,
            Rendering::Canvas { .. } => RenderMode::Canvas,
        }
    }
}

fn default_screen_size() -> [i32; 2] {
    [1080, 2340]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppBundle {
    pub app_id: String,
    #[serde(default = "default_screen_size")]
    pub screen_size: [i32; 2],
    pub manifest: Manifest,
    #[serde(default)]
    pub layouts: BTreeMap<String, LayoutNode>,
    #[serde(default)]
    pub resource_map: BTreeMap<String, String>,
    #[serde(default)]
    pub code_summary: Vec<ClassSummary>,
    pub behavior: BehaviorScript,
    pub rendering: BTreeMap<StateId, Screen>,
}

impl AppBundle {
    pub fn screen_bounds(&self) -> Rect {
        Rect::new(0, 0, self.screen_size[0], self.screen_size[1])
    }

    pub fn state_count(&self) -> usize {
        self.rendering.len()
    }

    /// Ground-truth ad ids an explorer can be credited for.
    pub fn ground_truth_ads(&self) -> Vec<String> {
        self.behavior.ad_triggers.iter().map(|t| t.ad_id.clone()).collect()
    }

    pub fn ad_type_of(&self, ad_id: &str) -> Option<AdType> {
        self.behavior.ad_triggers.iter().find(|t| t.ad_id == ad_id).map(|t| t.ad_type)
    }

    pub fn class(&self, name: &str) -> Option<&ClassSummary> {
        self.code_summary.iter().find(|c| c.class_name == name)
    }

    /// Observation of a latent state at the given clock, as the device
    /// would report it.
    pub fn observe_state(&self, state: &str, clock_seconds: f64) -> Option<UiState> {
        let screen = self.rendering.get(state)?;
        let (widgets, canvas_regions) = match &screen.rendering {
            Rendering::Hierarchy(specs) => (specs.iter().map(|s| s.widget.clone()).collect(), Vec::new()),
            Rendering::Canvas { regions, .. } => (Vec::new(), regions.clone()),
        };
        let canvas_contours = match &screen.rendering {
            Rendering::Canvas { contours, .. } => contours.clone(),
            Rendering::Hierarchy(_) => Vec::new(),
        };
        let mode = screen.mode();
        let canonical = canonical_text(&screen.activity, mode, &widgets, &canvas_regions);
        Some(UiState {
            state_fingerprint: short_digest(&canonical),
            activity: screen.activity.clone(),
            mode,
            external: screen.external,
            widgets,
            canvas_regions,
            canvas_contours,
            screen_bounds: self.screen_bounds(),
            clock_seconds,
        })
    }
}

/// One device observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UiState {
    pub state_fingerprint: String,
    pub activity: String,
    pub mode: RenderMode,
    pub external: bool,
    /// Hierarchy mode only.
    pub widgets: Vec<Widget>,
    /// Canvas mode only; reserved for region detectors.
    pub canvas_regions: Vec<GroundTruthRegion>,
    /// Canvas mode only; coarse outlines for the heuristic analyzer.
    #[serde(default)]
    pub canvas_contours: Vec<Rect>,
    pub screen_bounds: Rect,
    pub clock_seconds: f64,
}

impl UiState {
    /// Canonical preorder serialization of the visible structure; see
    /// [`canonical_text`].
    pub fn canonical_text(&self) -> String {
        canonical_text(&self.activity, self.mode, &self.widgets, &self.canvas_regions)
    }

    pub fn widget(&self, index: usize) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.index == index)
    }

    /// Device-side hit test: the smallest painted region under a point.
    pub fn region_at(&self, x: i32, y: i32) -> Option<&GroundTruthRegion> {
        self.canvas_regions.iter().filter(|r| r.bounds.contains_point(x, y)).min_by_key(|r| r.bounds.area())
    }
}

/// Deterministic serialization of a screen: one line per node in document
/// order, `>`-prefixed by depth, carrying `class|resource_id|text`. Bounds,
/// indices and timestamps are excluded.
pub fn canonical_text(activity: &str, mode: RenderMode, widgets: &[Widget], regions: &[GroundTruthRegion]) -> String {
    let mut lines = Vec::with_capacity(widgets.len() + regions.len() + 1);
    match mode {
        RenderMode::Hierarchy => {
            lines.push(format!("{activity}||"));
            for w in widgets {
                lines.push(format!(
                    "{}{}|{}|{}",
                    ">".repeat(w.depth as usize + 1),
                    w.class,
                    w.resource_id.as_deref().unwrap_or(""),
                    w.label().unwrap_or("")
                ));
            }
        }
        RenderMode::Canvas => {
            lines.push(format!("{activity}|canvas|"));
            for r in regions {
                lines.push(format!(">Region|{}|", r.kind));
            }
        }
    }
    lines.join("\n")
}

/// Six hex digits of SHA-256, the short state id style used in logs.
pub fn short_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..3])
}
