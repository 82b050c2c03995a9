use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use super::{BfsPolicy, CriterionConfig, CriterionPolicy, KeywordPolicy, RSemSource, RandomPolicy};
use crate::app_model::{parse_bundle, ActionKey, AppBundle};
use crate::knowledge::PriorKnowledgeBase;
use crate::memory::{HashEmbedder, TemplateSummarizer};
use crate::navigator::{run_episode, EpisodeEnv, EpisodeLimits, EpisodeReport, NavigatorConfig, Policy};
use crate::utg::TransitionGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("degenerate family: loop size {0} has no loop")]
    Degenerate(usize),
    #[error("invalid family parameter: {0}")]
    Invalid(String),
}

/// One member of the aliased-loop family.
///
/// `loop_size` screens look identical: a `Next` control cycles through
/// them, `decoys` controls open side chains of `side_depth` pages, and a
/// final `More` control leaves the loop for an ad screen whose ad depends
/// on the loop position. Closing the ad resumes at the next position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopFamily {
    pub loop_size: usize,
    pub decoys: usize,
    pub side_depth: usize,
    pub r_loop: f64,
    pub r_exit: f64,
    pub r_decoy: f64,
    pub r_close: f64,
}

impl LoopFamily {
    /// Action leaving the loop.
    pub fn exit_action(&self) -> ActionKey {
        ActionKey::Tap(self.decoys + 1)
    }

    pub fn ad_id(i: usize) -> String {
        format!("loop_ad_{i}")
    }
}

fn row(i: usize) -> Value {
    json!([0, 300 + 160 * i as i32, 1080, 440 + 160 * i as i32])
}

fn button(i: usize, class: &str, text: &str, gain: f64) -> Value {
    json!({"class": class, "text": text, "bounds": row(i), "clickable": true, "gain": gain})
}

/// Builds a validated bundle for one family member.
pub fn aliased_loop_app(f: &LoopFamily) -> Result<AppBundle, FamilyError> {
    if f.loop_size < 2 {
        return Err(FamilyError::Degenerate(f.loop_size));
    }
    if f.side_depth == 0 && f.decoys > 0 {
        return Err(FamilyError::Invalid("decoys need side_depth >= 1".into()));
    }
    let n = f.loop_size;
    let mut rendering = serde_json::Map::new();
    let mut transitions = Vec::new();
    let mut triggers = Vec::new();

    let mut loop_widgets = vec![button(0, "android.widget.Button", "Next", f.r_loop)];
    for k in 1..=f.decoys {
        loop_widgets.push(button(k, "android.widget.LinearLayout", &format!("Section {k}"), f.r_decoy));
    }
    loop_widgets.push(button(f.decoys + 1, "android.widget.Button", "More", f.r_exit));

    for i in 0..n {
        let me = format!("loop{i}");
        let next = format!("loop{}", (i + 1) % n);
        rendering.insert(me.clone(), json!({"activity": "GalleryActivity", "rendering": {"hierarchy": loop_widgets}}));
        transitions.push(json!({"from": me, "action": "tap:0", "next_state": next}));
        for k in 1..=f.decoys {
            transitions.push(json!({"from": me, "action": format!("tap:{k}"), "next_state": format!("side{i}_{k}_0")}));
            for j in 0..f.side_depth {
                let page = format!("side{i}_{k}_{j}");
                let mut widgets = vec![json!({"class": "android.widget.TextView", "text": format!("Section {k} page {j}"), "bounds": row(0)})];
                if j + 1 < f.side_depth {
                    widgets.push(button(1, "android.widget.Button", "Continue", f.r_decoy));
                    transitions.push(json!({"from": page, "action": "tap:1", "next_state": format!("side{i}_{k}_{}", j + 1)}));
                }
                let back = if j == 0 { me.clone() } else { format!("side{i}_{k}_{}", j - 1) };
                transitions.push(json!({"from": page, "action": "back", "next_state": back}));
                rendering.insert(page, json!({"activity": "SectionActivity", "rendering": {"hierarchy": widgets}}));
            }
        }
        let ad = format!("offer{i}");
        transitions.push(json!({"from": me, "action": format!("tap:{}", f.decoys + 1), "next_state": ad}));
        rendering.insert(
            ad.clone(),
            json!({"activity": "OfferActivity", "rendering": {"hierarchy": [button(0, "android.widget.Button", "Close", f.r_close)]}}),
        );
        transitions.push(json!({"from": ad, "action": "tap:0", "next_state": next}));
        transitions.push(json!({"from": ad, "action": "back", "next_state": next}));
        triggers.push(json!({"ad_id": LoopFamily::ad_id(i), "host_state": ad, "ad_type": "popup"}));
    }

    let doc = json!({
        "app_id": format!("loop_n{}_d{}_s{}", n, f.decoys, f.side_depth),
        "manifest": {"package": "com.example.gallery", "activities": ["GalleryActivity", "SectionActivity", "OfferActivity"]},
        "behavior": {"initial_state": "loop0", "transitions": transitions, "ad_triggers": triggers},
        "rendering": rendering,
    });
    parse_bundle(&doc.to_string()).map_err(|e| FamilyError::Invalid(e.to_string()))
}

/// Closed-form escape step: the loop is abandoned once
/// `r_loop - lambda * visits < r_exit`.
pub fn escape_threshold(r_loop: f64, r_exit: f64, lambda: f64) -> usize {
    ((r_loop - r_exit) / lambda).ceil().max(0.0) as usize
}

/// One-sided paired sign test: probability of at least `wins` successes
/// in `wins + losses` fair coin flips.
pub fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = (wins + losses) as u64;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    b.sf(wins as u64 - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageSpec {
    pub loop_sizes: (usize, usize),
    pub decoys: (usize, usize),
    pub side_depth: (usize, usize),
    pub seeds: usize,
    pub base_seed: u64,
    pub budget: usize,
    pub criterion: CriterionConfig,
    pub r_loop: f64,
    pub r_exit: f64,
    pub r_decoy: f64,
    pub r_close: f64,
}

impl Default for CoverageSpec {
    fn default() -> Self {
        Self {
            loop_sizes: (3, 10),
            decoys: (3, 6),
            side_depth: (2, 4),
            seeds: 100,
            base_seed: 0,
            budget: 60,
            criterion: CriterionConfig { lambda: 0.1, r_sem_source: RSemSource::Scripted, ..CriterionConfig::default() },
            r_loop: 0.5,
            r_exit: 0.9,
            r_decoy: 0.1,
            r_close: 0.0,
        }
    }
}

impl CoverageSpec {
    /// Family member for a seed; loop sizes cycle through the range.
    pub fn member(&self, seed_index: usize) -> LoopFamily {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed.wrapping_add(seed_index as u64));
        let span = self.loop_sizes.1.saturating_sub(self.loop_sizes.0) + 1;
        LoopFamily {
            loop_size: self.loop_sizes.0 + seed_index % span,
            decoys: rng.gen_range(self.decoys.0..=self.decoys.1),
            side_depth: rng.gen_range(self.side_depth.0..=self.side_depth.1),
            r_loop: self.r_loop,
            r_exit: self.r_exit,
            r_decoy: self.r_decoy,
            r_close: self.r_close,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCoverage {
    pub policy: String,
    pub coverages: Vec<usize>,
    pub mean: f64,
    /// Runs that left the loop at least once.
    pub escape_rate: f64,
    /// First exit decision per run, when any.
    pub escape_steps: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub baseline: String,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub policies: Vec<PolicyCoverage>,
    /// Criterion against each baseline.
    pub comparisons: Vec<PairedComparison>,
}

pub const FAMILY_POLICIES: [&str; 4] = ["criterion", "random", "bfs", "keyword"];

fn make_policy(name: &str, spec: &CoverageSpec, bundle: &AppBundle, seed: u64) -> Box<dyn Policy> {
    match name {
        "criterion" => Box::new(CriterionPolicy::new(spec.criterion.clone(), Some(bundle))),
        "random" => Box::new(RandomPolicy::new(seed)),
        "bfs" => Box::new(BfsPolicy),
        _ => Box::new(KeywordPolicy::new(seed)),
    }
}

/// Runs one policy on one family member from a fresh graph.
pub fn family_episode(bundle: Arc<AppBundle>, policy: &mut dyn Policy, budget: usize, seed: u64) -> EpisodeReport {
    let kb = PriorKnowledgeBase::default();
    let embedder = HashEmbedder::default();
    let env = EpisodeEnv {
        bundle,
        knowledge: &kb,
        success_activities: BTreeSet::new(),
        store: None,
        embedder: &embedder,
        summarizer: &TemplateSummarizer,
        captioner: None,
    };
    let config = NavigatorConfig {
        limits: EpisodeLimits { max_steps: budget, max_seconds: f64::INFINITY, ..EpisodeLimits::default() },
        restart_on_success: false,
        ..NavigatorConfig::default()
    };
    let mut graph = TransitionGraph::default();
    run_episode(&env, &mut graph, policy, &config, seed)
}

/// First decision step taking `exit`.
pub fn first_exit_step(report: &EpisodeReport, exit: &ActionKey) -> Option<usize> {
    report.trajectory.iter().find(|r| r.decision.is_some() && r.action == *exit).map(|r| r.step)
}

/// Mean ad coverage per policy over paired seeds, with sign tests of the
/// criterion policy against each baseline.
pub fn coverage_experiment(spec: &CoverageSpec) -> Result<CoverageStats, FamilyError> {
    if spec.loop_sizes.0 < 2 {
        return Err(FamilyError::Degenerate(spec.loop_sizes.0));
    }
    let members: Vec<(LoopFamily, Arc<AppBundle>)> = (0..spec.seeds)
        .map(|s| {
            let m = spec.member(s);
            aliased_loop_app(&m).map(|b| (m, Arc::new(b)))
        })
        .collect::<Result<_, _>>()?;
    let cells: Vec<(usize, usize)> =
        (0..FAMILY_POLICIES.len()).flat_map(|p| (0..spec.seeds).map(move |s| (p, s))).collect();
    let results: Vec<(usize, usize, usize, Option<usize>)> = cells
        .par_iter()
        .map(|&(p, s)| {
            let (m, bundle) = &members[s];
            let seed = spec.base_seed.wrapping_add(s as u64);
            let mut policy = make_policy(FAMILY_POLICIES[p], spec, bundle, seed);
            let report = family_episode(bundle.clone(), policy.as_mut(), spec.budget, seed);
            (p, s, report.distinct_ads.len(), first_exit_step(&report, &m.exit_action()))
        })
        .collect();

    let mut table: BTreeMap<usize, Vec<(usize, Option<usize>)>> = BTreeMap::new();
    for (p, _, c, e) in results {
        table.entry(p).or_default().push((c, e));
    }
    let policies: Vec<PolicyCoverage> = table
        .into_iter()
        .map(|(p, rows)| {
            let coverages: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let escape_steps: Vec<Option<usize>> = rows.iter().map(|r| r.1).collect();
            PolicyCoverage {
                policy: FAMILY_POLICIES[p].to_string(),
                mean: coverages.iter().sum::<usize>() as f64 / coverages.len().max(1) as f64,
                escape_rate: escape_steps.iter().filter(|e| e.is_some()).count() as f64 / rows.len().max(1) as f64,
                coverages,
                escape_steps,
            }
        })
        .collect();
    let criterion = &policies[0].coverages;
    let comparisons = policies[1..]
        .iter()
        .map(|b| {
            let (mut wins, mut losses, mut ties) = (0, 0, 0);
            for (c, o) in criterion.iter().zip(&b.coverages) {
                match c.cmp(o) {
                    std::cmp::Ordering::Greater => wins += 1,
                    std::cmp::Ordering::Less => losses += 1,
                    std::cmp::Ordering::Equal => ties += 1,
                }
            }
            PairedComparison { baseline: b.policy.clone(), wins, losses, ties, p_value: sign_test_p(wins, losses) }
        })
        .collect();
    Ok(CoverageStats { policies, comparisons })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_small_cases() {
        assert!((sign_test_p(7, 0) - 0.0078125).abs() < 1e-12);
        assert!((sign_test_p(1, 1) - 0.75).abs() < 1e-12);
        assert_eq!(sign_test_p(0, 0), 1.0);
    }

    #[test]
    fn degenerate_loops_are_rejected() {
        let f = LoopFamily { loop_size: 1, decoys: 0, side_depth: 1, r_loop: 0.5, r_exit: 0.9, r_decoy: 0.1, r_close: 0.0 };
        assert_eq!(aliased_loop_app(&f).unwrap_err(), FamilyError::Degenerate(1));
    }

    #[test]
    fn loop_screens_alias() {
        let f = LoopFamily { loop_size: 4, decoys: 2, side_depth: 2, r_loop: 0.5, r_exit: 0.9, r_decoy: 0.1, r_close: 0.0 };
        let b = aliased_loop_app(&f).unwrap();
        let fps: BTreeSet<String> = (0..4).map(|i| b.observe_state(&format!("loop{i}"), 0.0).unwrap().state_fingerprint).collect();
        assert_eq!(fps.len(), 1);
        assert_eq!(b.ground_truth_ads().len(), 4);
    }
}
