use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{Rect, UiState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalOrigin {
    DeepDetector,
    HeuristicAnalyzer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    pub bounds: Rect,
    pub confidence: f64,
    pub origin: ProposalOrigin,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("region detector failed: {0}")]
pub struct DetectorError(pub String);

/// Learned-detector port. Implementations must be deterministic per state.
pub trait RegionDetector: Send + Sync {
    fn detect(&self, state: &UiState) -> Result<Vec<RegionProposal>, DetectorError>;
}

/// Stand-in for a trained detector: reports painted regions with a seeded
/// recall/noise model. The same screen always yields the same proposals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDetector {
    pub recall: f64,
    /// Spurious boxes per painted region.
    pub noise: f64,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for GroundTruthDetector {
    fn default() -> Self {
        Self { recall: 1.0, noise: 0.0, seed: 0, confidence: 0.9 }
    }
}

impl GroundTruthDetector {
    fn rng_for(&self, state: &UiState) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.seed.to_le_bytes());
        let fp = state.state_fingerprint.as_bytes();
        let n = fp.len().min(24);
        seed[8..8 + n].copy_from_slice(&fp[..n]);
        ChaCha8Rng::from_seed(seed)
    }
}

impl RegionDetector for GroundTruthDetector {
    fn detect(&self, state: &UiState) -> Result<Vec<RegionProposal>, DetectorError> {
        let mut rng = self.rng_for(state);
        let regions = &state.canvas_regions;
        let keep = ((self.recall.clamp(0.0, 1.0) * regions.len() as f64).round() as usize).min(regions.len());
        let mut chosen: Vec<usize> = (0..regions.len()).collect::<Vec<_>>().choose_multiple(&mut rng, keep).copied().collect();
        chosen.sort_unstable();
        let mut out: Vec<RegionProposal> = chosen
            .into_iter()
            .map(|i| RegionProposal {
                bounds: regions[i].bounds,
                confidence: self.confidence,
                origin: ProposalOrigin::DeepDetector,
            })
            .collect();

        let screen = state.screen_bounds;
        let spurious = (self.noise.max(0.0) * regions.len() as f64).round() as usize;
        for _ in 0..spurious {
            let w = rng.gen_range(40..=screen.width().max(41) / 3);
            let h = rng.gen_range(40..=screen.height().max(41) / 6);
            let left = rng.gen_range(screen.left..=(screen.right - w).max(screen.left));
            let top = rng.gen_range(screen.top..=(screen.bottom - h).max(screen.top));
            out.push(RegionProposal {
                bounds: Rect::new(left, top, left + w, top + h),
                confidence: self.confidence * 0.4,
                origin: ProposalOrigin::DeepDetector,
            });
        }
        Ok(out)
    }
}

/// Geometric analyzer: snaps coarse contours outward to a uniform grid and
/// merges boxes that touch or overlap after snapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicAnalyzer {
    pub grid_px: i32,
    pub confidence: f64,
}

impl Default for HeuristicAnalyzer {
    fn default() -> Self {
        Self { grid_px: 20, confidence: 0.5 }
    }
}

impl HeuristicAnalyzer {
    pub fn analyze(&self, state: &UiState) -> Vec<RegionProposal> {
        let g = self.grid_px.max(1);
        let screen = state.screen_bounds;
        let mut boxes: Vec<Rect> = state
            .canvas_contours
            .iter()
            .map(|c| {
                Rect::new(
                    c.left.div_euclid(g) * g,
                    c.top.div_euclid(g) * g,
                    -((-c.right).div_euclid(g)) * g,
                    -((-c.bottom).div_euclid(g)) * g,
                )
            })
            .filter_map(|r| r.intersection(&screen))
            .collect();

        // Edge-aligned merge: overlapping snapped boxes become their union.
        let mut merged = true;
        while merged {
            merged = false;
            'outer: for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    if boxes[i].intersection(&boxes[j]).is_some() {
                        let (a, b) = (boxes[i], boxes.remove(j));
                        boxes[i] = Rect::new(
                            a.left.min(b.left),
                            a.top.min(b.top),
                            a.right.max(b.right),
                            a.bottom.max(b.bottom),
                        );
                        merged = true;
                        break 'outer;
                    }
                }
            }
        }
        boxes
            .into_iter()
            .map(|bounds| RegionProposal { bounds, confidence: self.confidence, origin: ProposalOrigin::HeuristicAnalyzer })
            .collect()
    }
}

/// Greedy suppression: proposals are taken in descending confidence and
/// dropped when their IoU with a kept box reaches the threshold. Output is
/// in reading order (top, left).
pub fn consolidate_regions(a: &[RegionProposal], b: &[RegionProposal], iou_threshold: f64) -> Vec<RegionProposal> {
    let mut all: Vec<&RegionProposal> = a.iter().chain(b.iter()).collect();
    all.sort_by(|x, y| y.confidence.total_cmp(&x.confidence));
    let mut kept: Vec<RegionProposal> = Vec::new();
    for p in all {
        if kept.iter().all(|k| k.bounds.iou(&p.bounds) < iou_threshold) {
            kept.push(p.clone());
        }
    }
    kept.sort_by_key(|p| (p.bounds.top, p.bounds.left, p.bounds.bottom, p.bounds.right));
    kept
}

pub struct Detection {
    pub proposals: Vec<RegionProposal>,
    /// The learned detector failed and only heuristic boxes are present.
    pub degraded: bool,
}

/// Learned detector plus geometric analyzer, unified by consolidation.
pub struct HybridDetector {
    pub deep: Option<Box<dyn RegionDetector>>,
    pub heuristic: Option<HeuristicAnalyzer>,
    pub iou_threshold: f64,
}

impl Default for HybridDetector {
    fn default() -> Self {
        Self {
            deep: Some(Box::new(GroundTruthDetector::default())),
            heuristic: Some(HeuristicAnalyzer::default()),
            iou_threshold: 0.5,
        }
    }
}

impl HybridDetector {
    pub fn detect_regions(&self, state: &UiState) -> Detection {
        let heuristic = self.heuristic.as_ref().map(|h| h.analyze(state)).unwrap_or_default();
        let (deep, degraded) = match &self.deep {
            Some(d) => match d.detect(state) {
                Ok(p) => (p, false),
                Err(e) => {
                    tracing::warn!(state = %state.state_fingerprint, error = %e, "falling back to heuristic regions");
                    (Vec::new(), true)
                }
            },
            None => (Vec::new(), false),
        };
        Detection { proposals: consolidate_regions(&deep, &heuristic, self.iou_threshold), degraded }
    }
}
