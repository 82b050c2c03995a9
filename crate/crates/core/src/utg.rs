//! UI transition graph with per-node visit counts and smoothed
//! ad-relevance beliefs.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{ActionKey, RenderMode, UiState};

pub const DEFAULT_INITIAL_SCORE: f64 = 0.10;
pub const DEFAULT_ALPHA: f64 = 0.3;

/// Pseudo-state standing for the device home screen before launch.
pub const LAUNCHER: &str = "launcher";

#[derive(Debug, Error, PartialEq)]
pub enum UtgError {
    #[error("unknown node {0}")]
    MissingNode(String),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("unknown export format '{0}'")]
    UnknownFormat(String),
    #[error("dot export cannot be read back")]
    WriteOnly,
    #[error("malformed graph document: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtgNode {
    pub id: String,
    pub activity: String,
    pub visits: u64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_summary: Option<String>,
    #[serde(default)]
    pub structural_metadata: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtgEdge {
    pub from: String,
    pub event: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionKey>,
}

/// Identity of a state as the graph records it.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeInfo {
    pub id: String,
    pub activity: String,
    pub structural_metadata: String,
}

impl NodeInfo {
    pub fn launcher() -> Self {
        Self { id: LAUNCHER.into(), activity: LAUNCHER.into(), structural_metadata: String::new() }
    }
}

impl From<&UiState> for NodeInfo {
    fn from(s: &UiState) -> Self {
        let structural_metadata = match s.mode {
            RenderMode::Hierarchy => {
                let clickable = s.widgets.iter().filter(|w| w.clickable).count();
                format!("hierarchy:{}w/{}c", s.widgets.len(), clickable)
            }
            RenderMode::Canvas => format!("canvas:{}r", s.canvas_regions.len()),
        };
        Self { id: s.state_fingerprint.clone(), activity: s.activity.clone(), structural_metadata }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = UtgError;

    fn from_str(s: &str) -> Result<Self, UtgError> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(UtgError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphDoc {
    version: u32,
    initial_score: f64,
    nodes: Vec<UtgNode>,
    edges: Vec<UtgEdge>,
}

#[derive(Clone, Debug)]
pub struct TransitionGraph {
    initial_score: f64,
    nodes: BTreeMap<String, UtgNode>,
    edges: Vec<UtgEdge>,
    edge_index: HashSet<(String, String, String)>,
}

impl PartialEq for TransitionGraph {
    fn eq(&self, other: &Self) -> bool {
        self.initial_score == other.initial_score && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Default for TransitionGraph {
    fn default() -> Self {
        Self::new(DEFAULT_INITIAL_SCORE)
    }
}

/// Nodes within a hop bound, ordered by (hop distance, id).
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub nodes: Vec<(usize, UtgNode)>,
    pub edges: Vec<UtgEdge>,
}

impl Neighborhood {
    pub fn ids(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|(_, n)| n.id.clone()).collect()
    }
}

impl TransitionGraph {
    pub fn new(initial_score: f64) -> Self {
        Self { initial_score, nodes: BTreeMap::new(), edges: Vec::new(), edge_index: HashSet::new() }
    }

    pub fn initial_score(&self) -> f64 {
        self.initial_score
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&UtgNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &UtgNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[UtgEdge] {
        &self.edges
    }

    pub fn contains_edge(&self, from: &str, event: &str, to: &str) -> bool {
        self.edge_index.contains(&(from.to_string(), event.to_string(), to.to_string()))
    }

    pub fn out_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a UtgEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Visits of `id`, zero when unknown.
    pub fn visits(&self, id: &str) -> u64 {
        self.nodes.get(id).map_or(0, |n| n.visits)
    }

    /// Score of `id`, the initial score when unknown.
    pub fn score(&self, id: &str) -> f64 {
        self.nodes.get(id).map_or(self.initial_score, |n| n.score)
    }

    pub fn ensure_node(&mut self, info: &NodeInfo) -> &mut UtgNode {
        let initial = self.initial_score;
        self.nodes.entry(info.id.clone()).or_insert_with(|| UtgNode {
            id: info.id.clone(),
            activity: info.activity.clone(),
            visits: 0,
            score: initial,
            semantic_summary: None,
            structural_metadata: info.structural_metadata.clone(),
        })
    }

    /// Adds both endpoints and the edge if new; the target's visit count
    /// grows on every call.
    pub fn record_transition(&mut self, from: &NodeInfo, event: &str, action: Option<&ActionKey>, to: &NodeInfo) {
        self.ensure_node(from);
        self.ensure_node(to).visits += 1;
        let key = (from.id.clone(), event.to_string(), to.id.clone());
        if self.edge_index.insert(key) {
            self.edges.push(UtgEdge {
                from: from.id.clone(),
                event: event.to_string(),
                to: to.id.clone(),
                action: action.cloned(),
            });
        }
    }

    pub fn set_summary(&mut self, id: &str, summary: impl Into<String>) -> Result<(), UtgError> {
        let node = self.nodes.get_mut(id).ok_or_else(|| UtgError::MissingNode(id.to_string()))?;
        node.semantic_summary = Some(summary.into());
        Ok(())
    }

    /// `score <- (1 - alpha) * score + alpha * s_hat`; returns the new score.
    pub fn update_score(&mut self, id: &str, s_hat: f64, alpha: f64) -> Result<f64, UtgError> {
        check_unit("s_hat", s_hat)?;
        check_unit("alpha", alpha)?;
        let node = self.nodes.get_mut(id).ok_or_else(|| UtgError::MissingNode(id.to_string()))?;
        // One rounding on the alpha * s_hat term keeps 0.05 -> 0.8 at 0.3 on 0.275.
        node.score = alpha.mul_add(s_hat, (1.0 - alpha) * node.score).clamp(0.0, 1.0);
        Ok(node.score)
    }

    /// Breadth-first reachability within `hops` directed hops. Edges are
    /// those leaving a node closer than the bound.
    pub fn neighborhood(&self, id: &str, hops: usize) -> Result<Neighborhood, UtgError> {
        if !self.nodes.contains_key(id) {
            return Err(UtgError::MissingNode(id.to_string()));
        }
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.edges {
            adjacency.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
        let mut dist: BTreeMap<&str, usize> = BTreeMap::from([(id, 0)]);
        let mut queue = VecDeque::from([id]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur];
            if d == hops {
                continue;
            }
            for &next in adjacency.get(cur).into_iter().flatten() {
                if !dist.contains_key(next) {
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
        let mut nodes: Vec<(usize, UtgNode)> = dist.iter().map(|(n, d)| (*d, self.nodes[*n].clone())).collect();
        nodes.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        let mut edges: Vec<UtgEdge> = self
            .edges
            .iter()
            .filter(|e| dist.get(e.from.as_str()).is_some_and(|d| *d < hops) && dist.contains_key(e.to.as_str()))
            .cloned()
            .collect();
        edges.sort_by_key(|e| dist[e.from.as_str()]);
        Ok(Neighborhood { nodes, edges })
    }

    /// Union with another graph. Visits sum; scores and summaries already
    /// present here are kept.
    pub fn merge(&mut self, other: &TransitionGraph) {
        for node in other.nodes.values() {
            match self.nodes.get_mut(&node.id) {
                Some(mine) => {
                    mine.visits += node.visits;
                    if mine.semantic_summary.is_none() {
                        mine.semantic_summary = node.semantic_summary.clone();
                    }
                }
                None => {
                    self.nodes.insert(node.id.clone(), node.clone());
                }
            }
        }
        for e in &other.edges {
            if self.edge_index.insert((e.from.clone(), e.event.clone(), e.to.clone())) {
                self.edges.push(e.clone());
            }
        }
    }

    pub fn reset_visits(&mut self) {
        for n in self.nodes.values_mut() {
            n.visits = 0;
        }
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => {
                let doc = GraphDoc {
                    version: 1,
                    initial_score: self.initial_score,
                    nodes: self.nodes.values().cloned().collect(),
                    edges: self.edges.clone(),
                };
                serde_json::to_string_pretty(&doc).expect("graph serializes")
            }
            ExportFormat::Dot => {
                let mut out = String::from("digraph utg {\n");
                for n in self.nodes.values() {
                    let _ = writeln!(
                        out,
                        "  \"{}\" [label=\"{}\\n{}\\nvisits={} score={:.2}\"];",
                        n.id,
                        n.id,
                        escape_dot(&n.activity),
                        n.visits,
                        n.score
                    );
                }
                for e in &self.edges {
                    let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", e.from, e.to, escape_dot(&e.event));
                }
                out.push_str("}\n");
                out
            }
        }
    }

    pub fn import(text: &str, format: ExportFormat) -> Result<Self, UtgError> {
        if format == ExportFormat::Dot {
            return Err(UtgError::WriteOnly);
        }
        let doc: GraphDoc = serde_json::from_str(text).map_err(|e| UtgError::Parse(e.to_string()))?;
        let mut graph = TransitionGraph::new(doc.initial_score);
        for n in doc.nodes {
            check_unit("score", n.score)?;
            graph.nodes.insert(n.id.clone(), n);
        }
        for e in doc.edges {
            for end in [&e.from, &e.to] {
                if !graph.nodes.contains_key(end) {
                    return Err(UtgError::MissingNode(end.clone()));
                }
            }
            if graph.edge_index.insert((e.from.clone(), e.event.clone(), e.to.clone())) {
                graph.edges.push(e);
            }
        }
        Ok(graph)
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), UtgError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(UtgError::OutOfRange { name, value })
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(id: &str) -> NodeInfo {
        NodeInfo { id: id.into(), activity: "A".into(), structural_metadata: String::new() }
    }

    #[test]
    fn repeated_transition_adds_one_edge() {
        let mut g = TransitionGraph::default();
        g.record_transition(&info("a"), "e", None, &info("b"));
        g.record_transition(&info("a"), "e", None, &info("b"));
        assert_eq!((g.node_count(), g.edge_count(), g.visits("b")), (2, 1, 2));
    }

    #[test]
    fn self_loop_is_one_node_one_edge() {
        let mut g = TransitionGraph::default();
        g.record_transition(&info("a"), "e", None, &info("a"));
        assert_eq!((g.node_count(), g.edge_count()), (1, 1));
    }

    #[test]
    fn score_update_matches_hand_arithmetic() {
        let mut g = TransitionGraph::new(0.05);
        g.ensure_node(&info("a"));
        let s = g.update_score("a", 0.8, 0.3).unwrap();
        assert!((s - 0.275).abs() < 1e-12);
        assert_eq!(g.update_score("a", 0.5, 0.0).unwrap(), s);
        assert_eq!(g.update_score("a", 0.9, 1.0).unwrap(), 0.9);
        assert!(matches!(g.update_score("a", 1.2, 0.3), Err(UtgError::OutOfRange { .. })));
        assert!(matches!(g.update_score("a", 0.5, -0.1), Err(UtgError::OutOfRange { .. })));
        assert!(matches!(g.update_score("zz", 0.5, 0.3), Err(UtgError::MissingNode(_))));
    }

    #[test]
    fn default_alpha_lifts_prior_above_point_six_in_three_steps() {
        let mut g = TransitionGraph::default();
        g.ensure_node(&info("a"));
        for _ in 0..3 {
            g.update_score("a", 1.0, DEFAULT_ALPHA).unwrap();
        }
        assert!(g.score("a") > 0.6);
    }

    #[test]
    fn neighborhood_on_chain() {
        let mut g = TransitionGraph::default();
        g.record_transition(&info("a"), "x", None, &info("b"));
        g.record_transition(&info("b"), "y", None, &info("c"));
        assert_eq!(g.neighborhood("a", 0).unwrap().ids(), BTreeSet::from(["a".to_string()]));
        let n = g.neighborhood("a", 2).unwrap();
        assert_eq!(n.nodes.iter().map(|(d, n)| (*d, n.id.as_str())).collect::<Vec<_>>(), [(0, "a"), (1, "b"), (2, "c")]);
        assert_eq!(n.edges.len(), 2);
        assert!(g.neighborhood("q", 1).is_err());
    }

    #[test]
    fn empty_graph_exports_header_only() {
        let g = TransitionGraph::default();
        assert_eq!(g.export(ExportFormat::Dot), "digraph utg {\n}\n");
        let json = g.export(ExportFormat::Json);
        assert_eq!(TransitionGraph::import(&json, ExportFormat::Json).unwrap(), g);
        assert!(matches!("svg".parse::<ExportFormat>(), Err(UtgError::UnknownFormat(_))));
        assert_eq!(TransitionGraph::import("", ExportFormat::Dot), Err(UtgError::WriteOnly));
    }
}
