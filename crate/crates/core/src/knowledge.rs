//! Fused prior knowledge: activity-level, component-level and global
//! evidence merged from the four offline priors.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::app_model::{ActionKey, AppBundle};
use crate::prober::{probe_bundle, NetworkPrior, ProbeConfig};
use crate::profiler::{
    extract_screen_prior, extract_slot_prior, extract_trigger_prior, ScreenPrior, SdkSignatureConfig, SlotEntry,
    SlotPrior, TriggerMethod, TriggerPrior, UNATTRIBUTED,
};
use crate::utg::TransitionGraph;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivityKnowledge {
    /// Declared by an ad SDK in the manifest.
    pub sdk_activity: bool,
    pub trigger_methods: Vec<TriggerMethod>,
    pub slots: Vec<SlotEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkHint {
    pub state_fingerprint: String,
    pub action: ActionKey,
    pub host: String,
    pub lag_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorKnowledgeBase {
    pub activities: BTreeMap<String, ActivityKnowledge>,
    /// Keyed by the short resource name (`adView` for `pkg:id/adView`).
    pub components: BTreeMap<String, SlotEntry>,
    pub libraries: BTreeSet<String>,
    pub ad_domains: BTreeSet<String>,
    pub network_hints: Vec<NetworkHint>,
    pub unattributed: Vec<TriggerMethod>,
}

/// `pkg:id/name` -> `name`; plain names pass through.
pub fn short_resource_name(id: &str) -> &str {
    id.rsplit_once(":id/").map_or(id, |(_, n)| n).rsplit('/').next().unwrap_or(id)
}

fn url_host(url: &str) -> Option<String> {
    url::Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_string))
}

pub fn build_knowledge_base(
    screen: &ScreenPrior,
    slot: &SlotPrior,
    trigger: &TriggerPrior,
    network: &NetworkPrior,
) -> PriorKnowledgeBase {
    let mut kb = PriorKnowledgeBase::default();
    for a in &screen.ad_related_activities {
        kb.activities.entry(a.clone()).or_default().sdk_activity = true;
    }
    for e in &slot.entries {
        kb.activities.entry(e.activity.clone()).or_default().slots.push(e.clone());
        if let Some(id) = &e.resource_id {
            kb.components.entry(short_resource_name(id).to_string()).or_insert_with(|| e.clone());
        }
    }
    for (activity, methods) in &trigger.methods_by_activity {
        if activity == UNATTRIBUTED {
            kb.unattributed = methods.clone();
        } else {
            kb.activities.entry(activity.clone()).or_default().trigger_methods = methods.clone();
        }
    }
    kb.libraries.extend(screen.detected_libraries.iter().cloned());
    kb.libraries.extend(trigger.libraries.iter().cloned());
    for l in &network.links {
        let host = url_host(&l.url).unwrap_or_default();
        kb.ad_domains.insert(host.clone());
        kb.network_hints.push(NetworkHint {
            state_fingerprint: l.state_fingerprint.clone(),
            action: l.action.clone(),
            host,
            lag_seconds: l.lag_seconds,
        });
    }
    kb.ad_domains.extend(network.unlinked.iter().filter_map(|t| url_host(&t.url)));
    kb
}

impl PriorKnowledgeBase {
    pub fn is_empty(&self) -> bool {
        *self == PriorKnowledgeBase::default()
    }

    pub fn activity(&self, name: &str) -> Option<&ActivityKnowledge> {
        self.activities.get(name)
    }

    pub fn component(&self, resource_id: &str) -> Option<&SlotEntry> {
        self.components.get(short_resource_name(resource_id))
    }

    pub fn component_by_hex(&self, hex: &str) -> Option<&SlotEntry> {
        self.components.values().find(|e| e.resource_id_hex.as_deref() == Some(hex))
    }

    pub fn hints_for_state<'a>(&'a self, fingerprint: &'a str) -> impl Iterator<Item = &'a NetworkHint> + 'a {
        self.network_hints.iter().filter(move |h| h.state_fingerprint == fingerprint)
    }
}

/// All offline artifacts for one bundle.
#[derive(Clone, Debug)]
pub struct OfflineProfile {
    pub screen: ScreenPrior,
    pub slot: SlotPrior,
    pub trigger: TriggerPrior,
    pub network: NetworkPrior,
    pub coarse_graph: TransitionGraph,
    pub knowledge: PriorKnowledgeBase,
}

/// Static profiling plus a random probe, fused into one knowledge base.
pub fn profile_offline(bundle: &Arc<AppBundle>, sdk: &SdkSignatureConfig, probe: &ProbeConfig, seed: u64) -> OfflineProfile {
    let screen = extract_screen_prior(bundle, sdk);
    let slot = extract_slot_prior(bundle, sdk);
    let trigger = extract_trigger_prior(bundle, sdk);
    let (coarse_graph, _, network) = probe_bundle(bundle.clone(), probe, seed);
    let knowledge = build_knowledge_base(&screen, &slot, &trigger, &network);
    OfflineProfile { screen, slot, trigger, network, coarse_graph, knowledge }
}
