use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BfsPolicy, CriterionConfig, CriterionPolicy, KeywordPolicy, RandomPolicy};
use crate::app_model::{parse_bundle, AdType, AppBundle};
use crate::knowledge::{profile_offline, OfflineProfile, PriorKnowledgeBase};
use crate::llm::{RemoteChatClient, RemoteConfig, RemoteEmbedder};
use crate::llm::{ChatBackend, ChatCaptioner, ChatSummarizer, ReplayBackend};
use crate::memory::{Embedder, ExperienceStore, HashEmbedder, MemoryConfig, Summarizer, TemplateSummarizer};
use crate::navigator::{compute_metrics, run_episode, AgentPolicy, EpisodeEnv, EpisodeReport, Metrics, NavigatorConfig, Policy};
use crate::perception::{PerceptionStats, ScriptedCaptioner, VisionCaptioner};
use crate::policy::{OracleConfig, ScriptedOracle};
use crate::policy::{ChatDecisionBackend, DecisionBackend};
use crate::profiler::SdkSignatureConfig;
use crate::prober::ProbeConfig;
use crate::utg::TransitionGraph;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign lists no policies")]
    NoPolicies,
    #[error("runs_per_app must be at least 1")]
    NoRuns,
    #[error("{0} seeds given for {1} runs per app")]
    SeedCount(usize, usize),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("bad corpus manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("bad bundle {path}: {message}")]
    Bundle { path: PathBuf, message: String },
    #[error("backend: {0}")]
    Backend(String),
    #[error("metrics: {0}")]
    Metrics(#[from] crate::navigator::MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusApp {
    /// Relative to the manifest file.
    pub bundle: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub name: String,
    pub apps: Vec<CorpusApp>,
}

/// Reads a TOML corpus manifest and every bundle it lists, in order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(CorpusManifest, Vec<Arc<AppBundle>>), CampaignError> {
    let path = path.as_ref();
    let text = read(path)?;
    let manifest: CorpusManifest =
        toml::from_str(&text).map_err(|e| CampaignError::Manifest { path: path.into(), message: e.to_string() })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let bundles = manifest
        .apps
        .iter()
        .map(|a| {
            let p = dir.join(&a.bundle);
            let text = read(&p)?;
            parse_bundle(&text).map(Arc::new).map_err(|e| CampaignError::Bundle { path: p, message: e.to_string() })
        })
        .collect::<Result<_, _>>()?;
    Ok((manifest, bundles))
}

fn read(path: &Path) -> Result<String, CampaignError> {
    std::fs::read_to_string(path).map_err(|e| CampaignError::Io { path: path.into(), message: e.to_string() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Prompted agent over the configured decision backend.
    Agent,
    Random,
    Bfs,
    Keyword,
    Criterion,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Agent => "agent",
            PolicyKind::Random => "random",
            PolicyKind::Bfs => "bfs",
            PolicyKind::Keyword => "keyword",
            PolicyKind::Criterion => "criterion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Oracle {
        #[serde(default)]
        config: OracleConfig,
    },
    Replay {
        path: PathBuf,
        #[serde(default)]
        strict: bool,
    },
    Remote {
        #[serde(default)]
        config: RemoteConfig,
    },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Oracle { config: OracleConfig::default() }
    }
}

/// Decision, summary, caption and embedding services for one backend choice.
pub struct Services {
    pub decision: Arc<dyn DecisionBackend>,
    pub summarizer: Arc<dyn Summarizer>,
    pub embedder: Arc<dyn Embedder>,
    /// `None` means captions come from the bundles' scripted labels.
    pub captioner: Option<Arc<dyn VisionCaptioner>>,
    /// Replayed transcripts are consumed in order, so cells run serially.
    pub serial: bool,
}

impl BackendSpec {
    pub fn services(&self, memory: &MemoryConfig) -> Result<Services, CampaignError> {
        let hashed = || Arc::new(HashEmbedder { dim: memory.dim }) as Arc<dyn Embedder>;
        Ok(match self {
            BackendSpec::Oracle { config } => Services {
                decision: Arc::new(ScriptedOracle::new(config.clone())),
                summarizer: Arc::new(TemplateSummarizer),
                embedder: hashed(),
                captioner: None,
                serial: false,
            },
            BackendSpec::Replay { path, strict } => {
                let chat: Arc<dyn ChatBackend> =
                    Arc::new(ReplayBackend::from_file(path, *strict).map_err(|e| CampaignError::Backend(e.to_string()))?);
                Services {
                    decision: Arc::new(ChatDecisionBackend { chat: chat.clone() }),
                    summarizer: Arc::new(ChatSummarizer { backend: chat }),
                    embedder: hashed(),
                    captioner: None,
                    serial: true,
                }
            }
            BackendSpec::Remote { config } => {
                let chat: Arc<dyn ChatBackend> = Arc::new(RemoteChatClient::new(config.clone()));
                Services {
                    decision: Arc::new(ChatDecisionBackend { chat: chat.clone() }),
                    summarizer: Arc::new(ChatSummarizer { backend: chat.clone() }),
                    embedder: Arc::new(RemoteEmbedder::new(config.clone())),
                    captioner: Some(Arc::new(ChatCaptioner { backend: chat })),
                    serial: false,
                }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSpec {
    pub manifest: PathBuf,
    pub policies: Vec<PolicyKind>,
    pub runs_per_app: usize,
    /// One seed per run; derived from `base_seed` when empty.
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub navigator: NavigatorConfig,
    pub backend: BackendSpec,
    pub sdk: SdkSignatureConfig,
    pub probe: ProbeConfig,
    pub memory: MemoryConfig,
    pub criterion: CriterionConfig,
    pub initial_score: f64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("corpus.toml"),
            policies: vec![PolicyKind::Agent, PolicyKind::Random, PolicyKind::Bfs, PolicyKind::Keyword],
            runs_per_app: 5,
            seeds: Vec::new(),
            base_seed: 0,
            navigator: NavigatorConfig::default(),
            backend: BackendSpec::default(),
            sdk: SdkSignatureConfig::default(),
            probe: ProbeConfig::default(),
            memory: MemoryConfig::default(),
            criterion: CriterionConfig::default(),
            initial_score: crate::utg::DEFAULT_INITIAL_SCORE,
        }
    }
}

impl CampaignSpec {
    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        toml::from_str(text).map_err(|e| CampaignError::Manifest { path: PathBuf::from("<campaign>"), message: e.to_string() })
    }

    pub fn run_seeds(&self) -> Result<Vec<u64>, CampaignError> {
        if self.runs_per_app == 0 {
            return Err(CampaignError::NoRuns);
        }
        if self.seeds.is_empty() {
            return Ok((0..self.runs_per_app as u64).map(|r| self.base_seed + r).collect());
        }
        if self.seeds.len() != self.runs_per_app {
            return Err(CampaignError::SeedCount(self.seeds.len(), self.runs_per_app));
        }
        Ok(self.seeds.clone())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeTally {
    pub total: usize,
    pub found: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub metrics: Metrics,
    pub by_ad_type: BTreeMap<AdType, TypeTally>,
    pub perception: PerceptionStats,
    pub fallback_decisions: usize,
    pub aborted_episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppRow {
    pub app_id: String,
    pub policy: String,
    pub ads_total: usize,
    /// Distinct ground-truth ads found, one entry per run.
    pub found_per_run: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_steps: Option<f64>,
    pub by_ad_type: BTreeMap<AdType, TypeTally>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub corpus: String,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySummary>,
    pub apps: Vec<AppRow>,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary(&self, policy: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let steps = |s: Option<f64>| s.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(out, "corpus {} ({} runs per app)", self.corpus, self.seeds.len());
        let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>10} {:>8}", "policy", "found", "total", "detection", "steps");
        for p in &self.policies {
            let m = &p.metrics;
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>9.1}% {:>8}",
                p.policy,
                m.found_ads,
                m.total_ads,
                m.detection_rate * 100.0,
                steps(m.avg_steps)
            );
        }
        let _ = writeln!(out, "\nby ad type");
        for p in &self.policies {
            let cells: Vec<String> =
                p.by_ad_type.iter().map(|(t, c)| format!("{} {}/{}", t.as_str(), c.found, c.total)).collect();
            let _ = writeln!(out, "{:<10} {}", p.policy, cells.join("  "));
        }
        let _ = writeln!(out, "\nper app");
        for a in &self.apps {
            let found: Vec<String> = a.found_per_run.iter().map(|f| f.to_string()).collect();
            let _ = writeln!(
                out,
                "{:<28} {:<10} ads {:>2}  found [{}]  steps {}",
                a.app_id,
                a.policy,
                a.ads_total,
                found.join(" "),
                steps(a.avg_steps)
            );
        }
        out
    }
}

fn tally(reports: &[&EpisodeReport], bundles: &BTreeMap<String, Arc<AppBundle>>) -> BTreeMap<AdType, TypeTally> {
    let mut out: BTreeMap<AdType, TypeTally> = BTreeMap::new();
    for r in reports {
        let Some(b) = bundles.get(&r.app_id) else { continue };
        let found: BTreeSet<&str> = r.distinct_ads.iter().map(String::as_str).collect();
        for t in &b.behavior.ad_triggers {
            let e = out.entry(t.ad_type).or_default();
            e.total += 1;
            e.found += usize::from(found.contains(t.ad_id.as_str()));
        }
    }
    out
}

struct Shared<'a> {
    spec: &'a CampaignSpec,
    bundles: &'a [Arc<AppBundle>],
    profiles: &'a [OfflineProfile],
    services: &'a Services,
    captioner: Arc<dyn VisionCaptioner>,
    empty_kb: PriorKnowledgeBase,
}

/// One policy over the whole corpus with one seed. Experiences carry over
/// between apps through a store private to this pass.
fn corpus_pass(sh: &Shared<'_>, kind: PolicyKind, seed: u64) -> Vec<EpisodeReport> {
    let store = ExperienceStore::in_memory(sh.spec.memory.clone());
    let mut out = Vec::with_capacity(sh.bundles.len());
    for (bundle, profile) in sh.bundles.iter().zip(sh.profiles) {
        let mut policy: Box<dyn Policy> = match kind {
            PolicyKind::Agent => Box::new(AgentPolicy::new("agent", sh.services.decision.clone())),
            PolicyKind::Random => Box::new(RandomPolicy::new(seed)),
            PolicyKind::Bfs => Box::new(BfsPolicy),
            PolicyKind::Keyword => Box::new(KeywordPolicy::new(seed)),
            PolicyKind::Criterion => Box::new(CriterionPolicy::new(sh.spec.criterion.clone(), Some(bundle))),
        };
        let mut graph = if kind == PolicyKind::Agent {
            let mut g = profile.coarse_graph.clone();
            g.reset_visits();
            g
        } else {
            TransitionGraph::new(sh.spec.initial_score)
        };
        let env = EpisodeEnv {
            bundle: bundle.clone(),
            knowledge: if kind == PolicyKind::Agent { &profile.knowledge } else { &sh.empty_kb },
            success_activities: bundle.manifest.registered_success_activities.iter().cloned().collect(),
            store: (kind == PolicyKind::Agent).then_some(&store),
            embedder: sh.services.embedder.as_ref(),
            summarizer: sh.services.summarizer.as_ref(),
            captioner: Some(sh.captioner.clone()),
        };
        let mut config = sh.spec.navigator.clone();
        config.limits.max_ads = Some(bundle.ground_truth_ads().len());
        out.push(run_episode(&env, &mut graph, policy.as_mut(), &config, seed));
    }
    out
}

/// Profiles each app once, runs every (policy, seed) corpus pass, and
/// reduces the episode reports into per-policy and per-app tables.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignReport, CampaignError> {
    let (manifest, bundles) = load_manifest(&spec.manifest)?;
    run_campaign_on(spec, &manifest.name, &bundles).map(|(r, _)| r)
}

/// [`run_campaign`] over already loaded bundles; also returns every
/// episode report, grouped by policy in spec order and then by seed.
pub fn run_campaign_on(
    spec: &CampaignSpec,
    corpus: &str,
    bundles: &[Arc<AppBundle>],
) -> Result<(CampaignReport, Vec<Vec<EpisodeReport>>), CampaignError> {
    if spec.policies.is_empty() {
        return Err(CampaignError::NoPolicies);
    }
    let seeds = spec.run_seeds()?;
    let services = spec.backend.services(&spec.memory)?;
    let profiles: Vec<OfflineProfile> = bundles
        .par_iter()
        .enumerate()
        .map(|(i, b)| profile_offline(b, &spec.sdk, &spec.probe, spec.base_seed.wrapping_add(i as u64)))
        .collect();
    let captioner: Arc<dyn VisionCaptioner> = match &services.captioner {
        Some(c) => c.clone(),
        None => Arc::new(ScriptedCaptioner::from_bundles(bundles)),
    };
    let shared = Shared { spec, bundles, profiles: &profiles, services: &services, captioner, empty_kb: PriorKnowledgeBase::default() };

    let cells: Vec<(PolicyKind, u64)> = spec.policies.iter().flat_map(|p| seeds.iter().map(move |s| (*p, *s))).collect();
    let passes: Vec<Vec<EpisodeReport>> = if services.serial {
        cells.iter().map(|(p, s)| corpus_pass(&shared, *p, *s)).collect()
    } else {
        cells.par_iter().map(|(p, s)| corpus_pass(&shared, *p, *s)).collect()
    };

    let truth: BTreeMap<String, BTreeSet<String>> =
        bundles.iter().map(|b| (b.app_id.clone(), b.ground_truth_ads().into_iter().collect())).collect();
    let by_id: BTreeMap<String, Arc<AppBundle>> = bundles.iter().map(|b| (b.app_id.clone(), b.clone())).collect();
    let mut grouped: Vec<Vec<EpisodeReport>> = Vec::new();
    let mut policies = Vec::new();
    let mut apps = Vec::new();
    for (pi, kind) in spec.policies.iter().enumerate() {
        let reports: Vec<EpisodeReport> =
            passes[pi * seeds.len()..(pi + 1) * seeds.len()].iter().flatten().cloned().collect();
        let refs: Vec<&EpisodeReport> = reports.iter().collect();
        let mut perception = PerceptionStats::default();
        for r in &reports {
            perception.frames += r.perception.frames;
            perception.captioned_elements += r.perception.captioned_elements;
            perception.captioner_requests += r.perception.captioner_requests;
            perception.degraded_frames += r.perception.degraded_frames;
        }
        policies.push(PolicySummary {
            policy: kind.as_str().to_string(),
            metrics: compute_metrics(&reports, &truth)?,
            by_ad_type: tally(&refs, &by_id),
            perception,
            fallback_decisions: reports.iter().map(|r| r.fallback_decisions).sum(),
            aborted_episodes: reports.iter().filter(|r| r.abort_error.is_some()).count(),
        });
        for b in bundles {
            let rows: Vec<EpisodeReport> = reports.iter().filter(|r| r.app_id == b.app_id).cloned().collect();
            let truth_ids = &truth[&b.app_id];
            let metrics = compute_metrics(&rows, &truth)?;
            apps.push(AppRow {
                app_id: b.app_id.clone(),
                policy: kind.as_str().to_string(),
                ads_total: truth_ids.len(),
                found_per_run: rows.iter().map(|r| r.distinct_ads.iter().filter(|a| truth_ids.contains(*a)).count()).collect(),
                avg_steps: metrics.avg_steps,
                by_ad_type: tally(&rows.iter().collect::<Vec<_>>(), &by_id),
            });
        }
        grouped.push(reports);
    }
    Ok((CampaignReport { corpus: corpus.to_string(), seeds, policies, apps }, grouped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_policy_list_is_rejected() {
        let spec = CampaignSpec { policies: vec![], ..CampaignSpec::default() };
        assert!(matches!(run_campaign_on(&spec, "x", &[]), Err(CampaignError::NoPolicies)));
    }

    #[test]
    fn missing_bundle_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.toml");
        std::fs::write(&path, "name = \"c\"\n[[apps]]\nbundle = \"gone.json\"\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, CampaignError::Io { .. }), "{err}");
        assert!(err.to_string().contains("gone.json"));
    }

    #[test]
    fn explicit_seeds_must_match_runs() {
        let spec = CampaignSpec { runs_per_app: 2, seeds: vec![1, 2, 3], ..CampaignSpec::default() };
        assert!(matches!(spec.run_seeds(), Err(CampaignError::SeedCount(3, 2))));
        let zero = CampaignSpec { runs_per_app: 0, ..CampaignSpec::default() };
        assert!(matches!(zero.run_seeds(), Err(CampaignError::NoRuns)));
    }
}
