//! Fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use adnav_core::app_model::{load_bundle, AppBundle};
use adnav_core::knowledge::{profile_offline, OfflineProfile};
use adnav_core::llm::{ChatBackend, ChatSummarizer, ReplayBackend};
use adnav_core::memory::{embed, Experience, ExperienceStore, HashEmbedder, MemoryConfig};
use adnav_core::navigator::{run_episode, AgentPolicy, EpisodeEnv, EpisodeReport, NavigatorConfig};
use adnav_core::policy::ChatDecisionBackend;
use adnav_core::profiler::SdkSignatureConfig;
use adnav_core::prober::ProbeConfig;

pub const B1_SUMMARY: &str =
    "Interacting with navigation options that lead to external app suggestions often triggers advertisement displays.";

/// Experiences already in memory when the dict_loop episode starts.
pub const SEEDED_EXPERIENCES: [&str; 3] = [
    "Opening a side menu and choosing an entry that promotes other apps often leads to a store page ad.",
    "Tapping a gift or bonus icon on the home screen often opens a full screen promotion.",
    "Pressing a button that offers free coins for watching a video often triggers a rewarded video ad.",
];

pub const PROBE_SEED: u64 = 1;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn bundle(app_id: &str) -> Arc<AppBundle> {
    Arc::new(load_bundle(fixtures().join("bundles").join(format!("{app_id}.json"))).unwrap())
}

pub fn profile(bundle: &Arc<AppBundle>) -> OfflineProfile {
    profile_offline(bundle, &SdkSignatureConfig::default(), &ProbeConfig::default(), PROBE_SEED)
}

pub fn success_activities(bundle: &AppBundle) -> BTreeSet<String> {
    bundle.manifest.registered_success_activities.iter().cloned().collect()
}

pub fn seeded_store(embedder: &HashEmbedder) -> ExperienceStore {
    let store = ExperienceStore::in_memory(MemoryConfig { dim: embedder.dim, ..MemoryConfig::default() });
    for s in SEEDED_EXPERIENCES {
        let v = embed(s, embedder).unwrap();
        store.store(Experience::new("000000", v, s, "seed", vec![])).unwrap();
    }
    store
}

/// The recorded dict_loop episode: replayed transcript, coarse graph from
/// the probe with visits cleared, three seeded experiences.
pub struct DictLoopRun {
    pub report: EpisodeReport,
    pub store: ExperienceStore,
    pub replay: Arc<ReplayBackend>,
}

pub fn dict_loop_replay() -> DictLoopRun {
    let b = bundle("dict_loop");
    let prof = profile(&b);
    let mut graph = prof.coarse_graph.clone();
    graph.reset_visits();
    let embedder = HashEmbedder { dim: MemoryConfig::default().dim };
    let store = seeded_store(&embedder);
    let replay = Arc::new(ReplayBackend::from_file(fixtures().join("transcripts/dict_loop.jsonl"), false).unwrap());
    let chat: Arc<dyn ChatBackend> = replay.clone();
    let summarizer = ChatSummarizer { backend: chat.clone() };
    let env = EpisodeEnv {
        bundle: b.clone(),
        knowledge: &prof.knowledge,
        success_activities: success_activities(&b),
        store: Some(&store),
        embedder: &embedder,
        summarizer: &summarizer,
        captioner: None,
    };
    let mut policy = AgentPolicy::new("agent", Arc::new(ChatDecisionBackend { chat }));
    let mut config = NavigatorConfig { record_prompts: true, ..NavigatorConfig::default() };
    config.limits.max_ads = Some(b.ground_truth_ads().len());
    let report = run_episode(&env, &mut graph, &mut policy, &config, 0);
    DictLoopRun { report, store, replay }
}

/// Compares `actual` with a golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = fixtures().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from golden:\n--- expected\n{expected}\n--- actual\n{actual}"))
    }
}

/// Agent and the three baselines over the 20-app corpus, scripted oracle,
/// five runs per app.
pub fn corpus_campaign() -> adnav_core::eval::CampaignReport {
    use adnav_core::eval::{run_campaign, CampaignSpec};
    let spec = CampaignSpec { manifest: fixtures().join("corpus.toml"), ..CampaignSpec::default() };
    run_campaign(&spec).unwrap()
}

/// Agent passes over the hierarchy corpus under one captioning rule:
/// perception totals plus the ads found per episode.
pub fn captioning_run(
    rule: adnav_core::perception::VlmPolicy,
) -> (adnav_core::perception::PerceptionStats, Vec<(String, BTreeSet<String>)>) {
    use adnav_core::eval::{load_manifest, run_campaign_on, CampaignSpec, PolicyKind};
    let (manifest, bundles) = load_manifest(fixtures().join("hierarchy.toml")).unwrap();
    let mut spec = CampaignSpec { policies: vec![PolicyKind::Agent], ..CampaignSpec::default() };
    spec.navigator.perception.vlm_policy = rule;
    let (report, episodes) = run_campaign_on(&spec, &manifest.name, &bundles).unwrap();
    let found = episodes[0].iter().map(|e| (e.app_id.clone(), e.distinct_ads.iter().cloned().collect())).collect();
    (report.policies[0].perception.clone(), found)
}
