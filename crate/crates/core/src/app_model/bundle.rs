use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use super::{is_framework_class, AppBundle, LayoutNode, Rendering};

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("cannot read bundle {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("duplicate activity '{0}' in manifest")]
    DuplicateActivity(String),
    #[error("unknown activity '{activity}' referenced by {referrer}")]
    UnknownActivity { activity: String, referrer: String },
    #[error("unknown state '{state}' referenced by {referrer}")]
    UnknownState { state: String, referrer: String },
    #[error("resource id '{id}' in layout '{layout}' does not resolve in the resource map")]
    UnresolvedResource { layout: String, id: String },
    #[error("class '{class}' has unknown superclass '{superclass}'")]
    UnknownSuperclass { class: String, superclass: String },
    #[error("duplicate class '{0}' in code summary")]
    DuplicateClass(String),
    #[error("superclass chain of '{0}' contains a cycle")]
    SuperclassCycle(String),
    #[error("duplicate ad id '{0}'")]
    DuplicateAd(String),
    #[error("unknown ad '{ad}' referenced by {referrer}")]
    UnknownAd { ad: String, referrer: String },
    #[error("duplicate transition for ({state}, {action})")]
    DuplicateTransition { state: String, action: String },
    #[error("invalid duration {value} in {referrer}")]
    InvalidDuration { value: f64, referrer: String },
    #[error("invalid bounds for element {index} of state '{state}'")]
    InvalidBounds { state: String, index: usize },
    #[error("silent ad '{ad}' must be named 'activity:{activity}' and host a registered success activity")]
    InvalidSilentAd { ad: String, activity: String },
    #[error("no states rendered")]
    Empty,
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<AppBundle, BundleError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_bundle(&text)
}

/// Parses and validates a bundle document, assigning widget and region
/// indices in document order.
pub fn parse_bundle(text: &str) -> Result<AppBundle, BundleError> {
    let mut bundle: AppBundle = serde_json::from_str(text).map_err(|e| BundleError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    assign_indices(&mut bundle);
    validate(&bundle)?;
    Ok(bundle)
}

fn assign_indices(bundle: &mut AppBundle) {
    for screen in bundle.rendering.values_mut() {
        match &mut screen.rendering {
            Rendering::Hierarchy(widgets) => {
                for (i, w) in widgets.iter_mut().enumerate() {
                    w.widget.index = i;
                }
            }
            Rendering::Canvas { regions, .. } => {
                for (i, r) in regions.iter_mut().enumerate() {
                    r.index = i;
                }
            }
        }
    }
}

fn check_duration(value: f64, referrer: impl FnOnce() -> String) -> Result<(), BundleError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(BundleError::InvalidDuration { value, referrer: referrer() })
    }
}

/// Checks every structural invariant of a bundle.
pub(crate) fn validate(bundle: &AppBundle) -> Result<(), BundleError> {
    if bundle.rendering.is_empty() {
        return Err(BundleError::Empty);
    }
    let manifest = &bundle.manifest;
    let mut seen = HashSet::new();
    for a in &manifest.activities {
        if !seen.insert(a.as_str()) {
            return Err(BundleError::DuplicateActivity(a.clone()));
        }
    }
    for a in &manifest.registered_success_activities {
        if !manifest.has_activity(a) {
            return Err(BundleError::UnknownActivity {
                activity: a.clone(),
                referrer: "registered_success_activities".into(),
            });
        }
    }

    let state_exists = |state: &str, referrer: &dyn Fn() -> String| {
        if bundle.rendering.contains_key(state) {
            Ok(())
        } else {
            Err(BundleError::UnknownState { state: state.to_string(), referrer: referrer() })
        }
    };

    let screen_bounds = bundle.screen_bounds();
    for (state, screen) in &bundle.rendering {
        if !screen.external && !manifest.has_activity(&screen.activity) {
            return Err(BundleError::UnknownActivity {
                activity: screen.activity.clone(),
                referrer: format!("state '{state}'"),
            });
        }
        match &screen.rendering {
            Rendering::Hierarchy(widgets) => {
                for w in widgets {
                    if !w.widget.bounds.is_well_ordered() {
                        return Err(BundleError::InvalidBounds { state: state.clone(), index: w.widget.index });
                    }
                }
            }
            Rendering::Canvas { regions, contours } => {
                for r in regions {
                    if !r.bounds.is_well_ordered() || !screen_bounds.contains(&r.bounds) {
                        return Err(BundleError::InvalidBounds { state: state.clone(), index: r.index });
                    }
                }
                for (i, c) in contours.iter().enumerate() {
                    if !c.is_well_ordered() || !screen_bounds.contains(c) {
                        return Err(BundleError::InvalidBounds { state: state.clone(), index: i });
                    }
                }
            }
        }
    }

    let behavior = &bundle.behavior;
    state_exists(&behavior.initial_state, &|| "initial_state".into())?;
    check_duration(behavior.emission_jitter_seconds, || "emission_jitter_seconds".into())?;

    let mut ad_ids = BTreeSet::new();
    for t in &behavior.ad_triggers {
        if !ad_ids.insert(t.ad_id.as_str()) {
            return Err(BundleError::DuplicateAd(t.ad_id.clone()));
        }
        state_exists(&t.host_state, &|| format!("ad '{}'", t.ad_id))?;
        check_duration(t.min_dwell_seconds, || format!("ad '{}'", t.ad_id))?;
        if t.silent {
            let activity = &bundle.rendering[&t.host_state].activity;
            if t.ad_id != format!("activity:{activity}")
                || !manifest.registered_success_activities.contains(activity)
            {
                return Err(BundleError::InvalidSilentAd { ad: t.ad_id.clone(), activity: activity.clone() });
            }
        }
    }

    let mut keys = HashSet::new();
    for tr in &behavior.transitions {
        let referrer = || format!("transition ({}, {})", tr.from, tr.action);
        state_exists(&tr.from, &referrer)?;
        state_exists(&tr.effect.next_state, &referrer)?;
        check_duration(tr.effect.delay_seconds, referrer)?;
        if !keys.insert((tr.from.as_str(), &tr.action)) {
            return Err(BundleError::DuplicateTransition { state: tr.from.clone(), action: tr.action.to_string() });
        }
        if let Some(ad) = &tr.effect.ad_exposure {
            if !ad_ids.contains(ad.as_str()) {
                return Err(BundleError::UnknownAd { ad: ad.clone(), referrer: referrer() });
            }
        }
    }
    for em in &behavior.emissions {
        let referrer = || format!("emission ({}, {})", em.from, em.action);
        state_exists(&em.from, &referrer)?;
        for line in &em.lines {
            check_duration(line.offset_seconds, referrer)?;
        }
    }

    for (activity, root) in &bundle.layouts {
        if !manifest.has_activity(activity) {
            return Err(BundleError::UnknownActivity { activity: activity.clone(), referrer: "layouts".into() });
        }
        check_layout_ids(activity, root, bundle)?;
    }

    validate_classes(bundle)
}

fn check_layout_ids(layout: &str, root: &LayoutNode, bundle: &AppBundle) -> Result<(), BundleError> {
    for (node, _) in root.walk() {
        if let Some(id) = &node.id {
            if !bundle.resource_map.contains_key(id) {
                return Err(BundleError::UnresolvedResource { layout: layout.to_string(), id: id.clone() });
            }
        }
    }
    Ok(())
}

fn validate_classes(bundle: &AppBundle) -> Result<(), BundleError> {
    let mut supers: HashMap<&str, &str> = HashMap::new();
    for c in &bundle.code_summary {
        if supers.insert(&c.class_name, &c.superclass).is_some() {
            return Err(BundleError::DuplicateClass(c.class_name.clone()));
        }
    }
    for c in &bundle.code_summary {
        if !supers.contains_key(c.superclass.as_str()) && !is_framework_class(&c.superclass) {
            return Err(BundleError::UnknownSuperclass { class: c.class_name.clone(), superclass: c.superclass.clone() });
        }
    }
    for c in &bundle.code_summary {
        let mut visited = HashSet::new();
        let mut current = c.class_name.as_str();
        while let Some(&parent) = supers.get(current) {
            if !visited.insert(current) {
                return Err(BundleError::SuperclassCycle(c.class_name.clone()));
            }
            current = parent;
        }
    }
    Ok(())
}
