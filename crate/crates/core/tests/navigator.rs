mod common;

use std::sync::Arc;

use adnav_core::app_model::ActionKey;
use adnav_core::llm::RequestKind;
use adnav_core::memory::{HashEmbedder, TemplateSummarizer};
use adnav_core::navigator::{run_episode, AgentPolicy, EpisodeEnv, NavigatorConfig, StepKind, TerminationReason};
use adnav_core::policy::{sections_in_order, OracleConfig, ScriptedOracle};
use adnav_core::utg::TransitionGraph;
use common::*;

#[test]
fn dict_loop_replay_finds_drawer_ad_in_two_steps() {
    let run = dict_loop_replay();
    let r = &run.report;
    assert_eq!(r.distinct_ads, ["play_redirect"]);
    assert_eq!(r.steps_taken, 2);
    assert_eq!(r.termination_reason, TerminationReason::AdBudget);
    assert_eq!(r.fallback_decisions, 0);
    assert_eq!(r.experiences_stored.len(), 1);
    assert_eq!(run.store.len(), 4);
    let snap = run.store.snapshot();
    let stored = snap.entries.iter().find(|e| e.id == r.experiences_stored[0]).unwrap();
    assert_eq!(stored.summary, B1_SUMMARY);
    assert_eq!(stored.trajectory.len(), 2);
    assert_eq!(run.replay.remaining(RequestKind::Decision), 0);
    assert_eq!(run.replay.remaining(RequestKind::Summary), 0);
}

#[test]
fn dict_loop_prompts_match_goldens() {
    let run = dict_loop_replay();
    let prompts: Vec<&str> = run.report.trajectory.iter().filter_map(|s| s.prompt.as_deref()).collect();
    assert_eq!(prompts.len(), 2);
    for (i, p) in prompts.iter().enumerate() {
        assert!(sections_in_order(p));
        check_golden(&format!("dict_loop_step{}.prompt", i + 1), p).unwrap();
    }
    let first = prompts[0];
    assert!(first.contains("[Activity Match] Current activity 'MainActivity' is listed as ad-related."));
    assert!(first.contains("[Component Match] A component with resource_id 'com.lexica.musicdict:id/adView' is a known ad container."));
    assert!(first.contains("(visited: 1 times)"));
    assert!(first.contains("**Reachable in 1-hop(s):**"));
    assert!(first.contains("**Reachable in 2-hop(s):**"));
    for s in SEEDED_EXPERIENCES {
        assert!(first.contains(&format!("- {s}")), "{s}");
    }
}

#[test]
fn ad_free_app_runs_to_step_budget() {
    let b = bundle("notes_plain");
    let prof = profile(&b);
    let embedder = HashEmbedder::default();
    let env = EpisodeEnv {
        bundle: b.clone(),
        knowledge: &prof.knowledge,
        success_activities: success_activities(&b),
        store: None,
        embedder: &embedder,
        summarizer: &TemplateSummarizer,
        captioner: None,
    };
    let mut policy = AgentPolicy::new("agent", Arc::new(ScriptedOracle::new(OracleConfig::default())));
    let mut graph = TransitionGraph::default();
    let r = run_episode(&env, &mut graph, &mut policy, &NavigatorConfig::default(), 3);
    assert_eq!(r.steps_taken, 60);
    assert_eq!(r.termination_reason, TerminationReason::StepBudget);
    assert!(r.distinct_ads.is_empty());
}

#[test]
fn crash_is_recovered_by_restart() {
    let b = bundle("flashlight_crash");
    let embedder = HashEmbedder::default();
    let kb = Default::default();
    let env = EpisodeEnv {
        bundle: b.clone(),
        knowledge: &kb,
        success_activities: success_activities(&b),
        store: None,
        embedder: &embedder,
        summarizer: &TemplateSummarizer,
        captioner: None,
    };
    let mut policy = adnav_core::eval::BfsPolicy;
    let mut graph = TransitionGraph::default();
    let r = run_episode(&env, &mut graph, &mut policy, &NavigatorConfig::default(), 1);
    let strobe = r.trajectory.iter().position(|s| s.kind == StepKind::Decision && s.action == ActionKey::Tap(1) && s.activity == "TorchActivity");
    let i = strobe.expect("bfs taps every option on the first screen");
    assert_eq!(r.trajectory[i + 1].kind, StepKind::Restart);
}

#[test]
fn dwell_gated_ad_needs_time_on_player() {
    let b = bundle("music_dwell");
    let t = b.behavior.ad_triggers.iter().find(|t| t.ad_id == "track_interstitial").unwrap();
    assert_eq!(t.min_dwell_seconds, 10.0);
    use adnav_core::app_model::{Session, SessionConfig};
    let (mut s, _) = Session::reset(b.clone(), 0, SessionConfig::default());
    s.step(&ActionKey::Tap(1)); // Albums
    let out = s.step(&ActionKey::Tap(0)); // Album one -> player, 5 s in
    assert!(out.ad_exposed.is_none());
    let out = s.step(&ActionKey::Tap(0)); // Pause keeps the entry time: 10 s
    assert_eq!(out.ad_exposed.as_deref(), Some("track_interstitial"));
}
