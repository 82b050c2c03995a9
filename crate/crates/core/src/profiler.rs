//! Three-layer static profiling of a bundle: declarative (manifest),
//! structural (layout resources) and behavioral (code summary) evidence of
//! ad integration, producing screen, slot and trigger priors.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::app_model::{AppBundle, MetaEntry};

/// Key collecting trigger clues whose class chain never reaches a
/// registered activity.
pub const UNATTRIBUTED: &str = "<unattributed>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdFormat {
    Banner,
    Interstitial,
    Native,
    Rewarded,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatHint {
    pub substring: String,
    pub format: AdFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdkLibrary {
    pub prefix: String,
    pub name: String,
}

/// Ad SDK signatures the profiler matches against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdkSignatureConfig {
    pub sdk_prefixes: Vec<SdkLibrary>,
    pub ad_api_names: Vec<String>,
    pub ad_listener_names: Vec<String>,
    /// Checked in order; first substring hit wins.
    pub ad_format_name_hints: Vec<FormatHint>,
    pub ad_permissions: Vec<String>,
}

impl Default for SdkSignatureConfig {
    fn default() -> Self {
        let lib = |prefix: &str, name: &str| SdkLibrary { prefix: prefix.into(), name: name.into() };
        let hint = |substring: &str, format| FormatHint { substring: substring.into(), format };
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            sdk_prefixes: vec![
                lib("com.google.android.gms.ads", "Google AdMob"),
                lib("com.google.ads", "Google AdMob"),
                lib("com.facebook.ads", "Meta Audience Network"),
                lib("com.unity3d.ads", "Unity Ads"),
                lib("com.applovin", "AppLovin"),
                lib("com.mopub", "MoPub"),
                lib("com.vungle", "Vungle"),
                lib("com.ironsource", "ironSource"),
                lib("com.chartboost", "Chartboost"),
                lib("com.startapp", "Start.io"),
                lib("com.bytedance.sdk.openadsdk", "Pangle"),
            ],
            ad_api_names: strings(&[
                "loadAd",
                "loadAds",
                "load",
                "show",
                "showAd",
                "showInterstitial",
                "showRewardedVideo",
                "initialize",
                "init",
                "setAdListener",
            ]),
            ad_listener_names: strings(&[
                "AdListener",
                "InterstitialAdLoadCallback",
                "RewardedAdLoadCallback",
                "FullScreenContentCallback",
                "IUnityAdsListener",
                "IUnityAdsInitializationListener",
                "MaxAdListener",
                "InterstitialAdListener",
                "RewardedVideoAdListener",
            ]),
            ad_format_name_hints: vec![
                hint("interstitial", AdFormat::Interstitial),
                hint("reward", AdFormat::Rewarded),
                hint("native", AdFormat::Native),
                hint("banner", AdFormat::Banner),
                hint("adview", AdFormat::Banner),
            ],
            ad_permissions: strings(&["com.google.android.gms.permission.AD_ID"]),
        }
    }
}

impl SdkSignatureConfig {
    /// Library whose package prefix matches `name`, if any.
    pub fn library_for(&self, name: &str) -> Option<&SdkLibrary> {
        self.sdk_prefixes.iter().find(|l| {
            name.starts_with(&l.prefix)
                && name[l.prefix.len()..].chars().next().is_none_or(|c| c == '.' || c == '_')
        })
    }

    pub fn infer_format(&self, class: &str, resource_id: Option<&str>) -> AdFormat {
        let haystack = format!("{} {}", class, resource_id.unwrap_or("")).to_lowercase();
        self.ad_format_name_hints
            .iter()
            .find(|h| haystack.contains(&h.substring.to_lowercase()))
            .map_or(AdFormat::Unknown, |h| h.format)
    }

    fn is_ad_api(&self, invoked: &str) -> bool {
        self.library_for(invoked).is_some() && self.ad_api_names.iter().any(|n| n == simple_name(invoked))
    }

    fn is_ad_listener(&self, interface: &str) -> bool {
        self.ad_listener_names.iter().any(|n| n == simple_name(interface))
    }
}

fn simple_name(qualified: &str) -> &str {
    qualified.rsplit('.').next().unwrap_or(qualified)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreenPrior {
    pub ad_related_activities: BTreeSet<String>,
    pub matched_permissions: Vec<String>,
    pub matched_metadata: Vec<MetaEntry>,
    pub detected_libraries: BTreeSet<String>,
}

impl ScreenPrior {
    pub fn is_empty(&self) -> bool {
        self.ad_related_activities.is_empty()
            && self.matched_permissions.is_empty()
            && self.matched_metadata.is_empty()
            && self.detected_libraries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub activity: String,
    pub view_class: String,
    pub resource_id: Option<String>,
    pub resource_id_hex: Option<String>,
    pub ad_format: AdFormat,
    /// Depth in the layout tree. Recorded, not scored.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotWarning {
    pub activity: String,
    pub resource_id: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotPrior {
    pub entries: Vec<SlotEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<SlotWarning>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerMethod {
    pub signature: String,
    /// show = 3, load = 2, init (and any other clue) = 1.
    pub rank: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TriggerPrior {
    pub methods_by_activity: BTreeMap<String, Vec<TriggerMethod>>,
    /// SDKs whose APIs the code invokes, attributed or not.
    pub libraries: BTreeSet<String>,
}

impl TriggerPrior {
    pub fn is_empty(&self) -> bool {
        self.methods_by_activity.is_empty()
    }
}

/// Importance of an ad API by its method name prefix.
pub fn api_rank(api: &str) -> u8 {
    let name = simple_name(api);
    if name.starts_with("show") {
        3
    } else if name.starts_with("load") {
        2
    } else {
        1
    }
}

pub fn extract_screen_prior(bundle: &AppBundle, config: &SdkSignatureConfig) -> ScreenPrior {
    let manifest = &bundle.manifest;
    let mut prior = ScreenPrior::default();
    for activity in &manifest.activities {
        if let Some(lib) = config.library_for(activity) {
            prior.ad_related_activities.insert(activity.clone());
            prior.detected_libraries.insert(lib.name.clone());
        }
    }
    for perm in &manifest.permissions {
        let lib = config.library_for(perm);
        if lib.is_some() || config.ad_permissions.contains(perm) {
            prior.matched_permissions.push(perm.clone());
        }
        if let Some(lib) = lib {
            prior.detected_libraries.insert(lib.name.clone());
        }
    }
    for entry in &manifest.metadata {
        let lib = config.library_for(&entry.name).or_else(|| config.library_for(&entry.value));
        if let Some(lib) = lib {
            prior.matched_metadata.push(entry.clone());
            prior.detected_libraries.insert(lib.name.clone());
        }
    }
    prior
}

pub fn extract_slot_prior(bundle: &AppBundle, config: &SdkSignatureConfig) -> SlotPrior {
    let mut prior = SlotPrior::default();
    for (activity, root) in &bundle.layouts {
        for (node, depth) in root.walk() {
            if config.library_for(&node.class).is_none() {
                continue;
            }
            let hex = node.id.as_ref().and_then(|id| bundle.resource_map.get(id).cloned());
            if let (Some(id), None) = (&node.id, &hex) {
                tracing::warn!(activity, id, "slot resource id does not resolve");
                prior.warnings.push(SlotWarning {
                    activity: activity.clone(),
                    resource_id: id.clone(),
                    message: format!("resource id '{id}' missing from resource map"),
                });
            }
            prior.entries.push(SlotEntry {
                activity: activity.clone(),
                view_class: node.class.clone(),
                resource_id: node.id.clone(),
                resource_id_hex: hex,
                ad_format: config.infer_format(&node.class, node.id.as_deref()),
                depth,
            });
        }
    }
    prior
}

/// Attributes ad API calls and listener callbacks to the first
/// manifest-registered activity on the class's superclass chain.
pub fn extract_trigger_prior(bundle: &AppBundle, config: &SdkSignatureConfig) -> TriggerPrior {
    let mut prior = TriggerPrior::default();
    let max_hops = bundle.code_summary.len() + 1;
    for class in &bundle.code_summary {
        let mut clues = Vec::new();
        for method in &class.methods {
            let apis: Vec<&String> = method.invokes.iter().filter(|i| config.is_ad_api(i)).collect();
            let listener = method.implements.iter().any(|i| config.is_ad_listener(i));
            for api in &apis {
                if let Some(lib) = config.library_for(api) {
                    prior.libraries.insert(lib.name.clone());
                }
            }
            if apis.is_empty() && !listener {
                continue;
            }
            let rank = apis.iter().map(|a| api_rank(a)).max().unwrap_or(1);
            clues.push(TriggerMethod { signature: method.signature.clone(), rank });
        }
        if clues.is_empty() {
            continue;
        }

        let mut owner = UNATTRIBUTED.to_string();
        let mut current = class.class_name.as_str();
        for _ in 0..max_hops {
            if bundle.manifest.has_activity(current) {
                owner = current.to_string();
                break;
            }
            match bundle.class(current) {
                Some(c) => current = &c.superclass,
                None => break,
            }
        }
        prior.methods_by_activity.entry(owner).or_default().extend(clues);
    }
    for methods in prior.methods_by_activity.values_mut() {
        methods.sort_by(|a, b| b.rank.cmp(&a.rank).then_with(|| a.signature.cmp(&b.signature)));
        // Same signature from several classes: keep the highest rank.
        let mut seen = BTreeSet::new();
        methods.retain(|m| seen.insert(m.signature.clone()));
    }
    prior
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::{
        BehaviorScript, ClassSummary, LayoutNode, Manifest, MethodSummary, Rendering, Screen,
    };

    fn bundle_with(manifest: Manifest, layouts: BTreeMap<String, LayoutNode>, code: Vec<ClassSummary>) -> AppBundle {
        let mut resource_map = BTreeMap::new();
        resource_map.insert("adView".to_string(), "0x7f0a001c".to_string());
        let mut rendering = BTreeMap::new();
        rendering.insert(
            "s".to_string(),
            Screen { activity: manifest.activities[0].clone(), external: false, rendering: Rendering::Hierarchy(vec![]) },
        );
        AppBundle {
            app_id: "t".into(),
            screen_size: [1080, 2340],
            manifest,
            layouts,
            resource_map,
            code_summary: code,
            behavior: BehaviorScript {
                initial_state: "s".into(),
                transitions: vec![],
                ad_triggers: vec![],
                emissions: vec![],
                emission_jitter_seconds: 0.0,
            },
            rendering,
        }
    }

    fn manifest(activities: &[&str]) -> Manifest {
        Manifest {
            package: "com.example".into(),
            activities: activities.iter().map(|s| s.to_string()).collect(),
            permissions: vec!["android.permission.INTERNET".into()],
            metadata: vec![],
            registered_success_activities: vec![],
        }
    }

    fn class(name: &str, sup: &str, methods: Vec<MethodSummary>) -> ClassSummary {
        ClassSummary { class_name: name.into(), superclass: sup.into(), methods }
    }

    fn method(sig: &str, invokes: &[&str]) -> MethodSummary {
        MethodSummary {
            signature: sig.into(),
            invokes: invokes.iter().map(|s| s.to_string()).collect(),
            implements: vec![],
        }
    }

    #[test]
    fn no_matches_give_empty_priors() {
        let b = bundle_with(manifest(&["MainActivity"]), BTreeMap::new(), vec![]);
        let cfg = SdkSignatureConfig::default();
        assert!(extract_screen_prior(&b, &cfg).is_empty());
        assert!(extract_slot_prior(&b, &cfg).entries.is_empty());
        assert!(extract_trigger_prior(&b, &cfg).is_empty());
    }

    #[test]
    fn admob_manifest_lists_activity_and_library() {
        let mut m = manifest(&["MainActivity", "com.google.android.gms.ads.AdActivity"]);
        m.metadata.push(MetaEntry {
            name: "com.google.android.gms.ads.APPLICATION_ID".into(),
            value: "ca-app-pub-0000~1111".into(),
        });
        let b = bundle_with(m, BTreeMap::new(), vec![]);
        let p = extract_screen_prior(&b, &SdkSignatureConfig::default());
        assert_eq!(p.ad_related_activities.iter().collect::<Vec<_>>(), ["com.google.android.gms.ads.AdActivity"]);
        assert_eq!(p.detected_libraries.iter().collect::<Vec<_>>(), ["Google AdMob"]);
        assert_eq!(p.matched_metadata.len(), 1);
        assert!(p.matched_permissions.is_empty());
    }

    #[test]
    fn prefix_match_respects_package_boundaries() {
        let cfg = SdkSignatureConfig::default();
        assert!(cfg.library_for("com.applovin.mediation.MaxAdView").is_some());
        assert!(cfg.library_for("com.applovinx.Fake").is_none());
    }

    #[test]
    fn adview_slot_resolves_hex_and_banner_format() {
        let root = LayoutNode {
            class: "LinearLayout".into(),
            id: None,
            children: vec![LayoutNode { class: "com.google.android.gms.ads.AdView".into(), id: Some("adView".into()), children: vec![] }],
        };
        let b = bundle_with(manifest(&["MainActivity"]), BTreeMap::from([("MainActivity".to_string(), root)]), vec![]);
        let slot = extract_slot_prior(&b, &SdkSignatureConfig::default());
        assert_eq!(slot.entries.len(), 1);
        let e = &slot.entries[0];
        assert_eq!(e.resource_id.as_deref(), Some("adView"));
        assert_eq!(e.resource_id_hex.as_deref(), Some("0x7f0a001c"));
        assert_eq!(e.ad_format, AdFormat::Banner);
        assert_eq!(e.depth, 1);
        assert!(slot.warnings.is_empty());
    }

    #[test]
    fn unresolvable_slot_id_emits_warning() {
        let root = LayoutNode { class: "com.facebook.ads.NativeAdLayout".into(), id: Some("nativeSlot".into()), children: vec![] };
        let b = bundle_with(manifest(&["MainActivity"]), BTreeMap::from([("MainActivity".to_string(), root)]), vec![]);
        let slot = extract_slot_prior(&b, &SdkSignatureConfig::default());
        assert_eq!(slot.entries[0].resource_id_hex, None);
        assert_eq!(slot.entries[0].ad_format, AdFormat::Native);
        assert_eq!(slot.warnings.len(), 1);
    }

    #[test]
    fn two_hop_chain_attributes_to_registered_activity() {
        let code = vec![
            class("MainActivity", "BaseActivity", vec![]),
            class("BaseActivity", "android.app.Activity", vec![]),
            class("AdHelper", "BaseActivity", vec![method("setup", &["com.google.android.gms.ads.AdView.loadAd"])]),
        ];
        // AdHelper -> BaseActivity -> android.app.Activity: BaseActivity is
        // not registered, so route the helper through MainActivity instead.
        let mut code2 = code.clone();
        code2[2].superclass = "MainActivity".into();
        let b = bundle_with(manifest(&["MainActivity"]), BTreeMap::new(), code2);
        let t = extract_trigger_prior(&b, &SdkSignatureConfig::default());
        assert_eq!(t.methods_by_activity["MainActivity"], vec![TriggerMethod { signature: "setup".into(), rank: 2 }]);

        let b = bundle_with(manifest(&["MainActivity"]), BTreeMap::new(), code);
        let t = extract_trigger_prior(&b, &SdkSignatureConfig::default());
        assert!(t.methods_by_activity.contains_key(UNATTRIBUTED));
        assert_eq!(t.libraries.iter().collect::<Vec<_>>(), ["Google AdMob"]);
    }

    #[test]
    fn activity_show_call_ranks_three_and_sorts_first() {
        let code = vec![class(
            "GameActivity",
            "android.app.Activity",
            vec![
                method("onCreate", &["com.unity3d.ads.UnityAds.initialize"]),
                method("onLevelEnd", &["com.unity3d.ads.UnityAds.show"]),
                method("prefetch", &["com.unity3d.ads.UnityAds.load"]),
                method("onClick", &["android.widget.Toast.show"]),
            ],
        )];
        let b = bundle_with(manifest(&["GameActivity"]), BTreeMap::new(), code);
        let t = extract_trigger_prior(&b, &SdkSignatureConfig::default());
        let ranks: Vec<(&str, u8)> =
            t.methods_by_activity["GameActivity"].iter().map(|m| (m.signature.as_str(), m.rank)).collect();
        assert_eq!(ranks, [("onLevelEnd", 3), ("prefetch", 2), ("onCreate", 1)]);
    }

    #[test]
    fn listener_only_class_on_framework_base_is_unattributed() {
        let code = vec![ClassSummary {
            class_name: "Callbacks".into(),
            superclass: "java.lang.Object".into(),
            methods: vec![MethodSummary {
                signature: "onAdLoaded".into(),
                invokes: vec![],
                implements: vec!["com.google.android.gms.ads.AdListener".into()],
            }],
        }];
        let b = bundle_with(manifest(&["MainActivity"]), BTreeMap::new(), code);
        let t = extract_trigger_prior(&b, &SdkSignatureConfig::default());
        assert_eq!(t.methods_by_activity[UNATTRIBUTED], vec![TriggerMethod { signature: "onAdLoaded".into(), rank: 1 }]);
    }
}
