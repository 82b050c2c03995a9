//! Cross-app experience memory: fingerprints of ad-triggering screens,
//! their embeddings, and one-sentence heuristics distilled from the
//! trajectories that reached them.

mod ann;
mod embed;

pub use ann::IvfIndex;
pub use embed::{cosine, dot, embed, normalize, tokenize, EmbedError, Embedder, HashEmbedder};

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{ActionKey, AdType, UiState};

pub const STORE_FORMAT: &str = "adnav-experience-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("experience summary is empty")]
    EmptySummary,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("embedding has dimension {got}, store uses {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("store file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("store file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Canonical preorder serialization of the screen (class, resource id,
/// text per node with depth markers).
pub fn fingerprint(state: &UiState) -> String {
    state.canonical_text()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub action: ActionKey,
    pub widget_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widget_label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    /// Assigned by the store.
    #[serde(default)]
    pub id: u64,
    pub fingerprint: String,
    pub embedding: Vec<f32>,
    pub summary: String,
    pub source_app: String,
    pub trajectory: Vec<TrajectoryStep>,
    /// Logical insertion stamp assigned by the store.
    #[serde(default)]
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad_type: Option<AdType>,
}

impl Experience {
    pub fn new(
        fingerprint: impl Into<String>,
        embedding: Vec<f32>,
        summary: impl Into<String>,
        source_app: impl Into<String>,
        trajectory: Vec<TrajectoryStep>,
    ) -> Self {
        Self {
            id: 0,
            fingerprint: fingerprint.into(),
            embedding,
            summary: summary.into(),
            source_app: source_app.into(),
            trajectory,
            created_at: 0,
            ad_type: None,
        }
    }
}

/// Dot product accumulated in f64.
pub fn dot64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] as f64 * y[i] as f64;
        }
    }
    let mut sum = acc.iter().sum::<f64>();
    for (x, y) in ra.iter().zip(rb) {
        sum += *x as f64 * *y as f64;
    }
    sum
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub tau: f64,
    pub dim: usize,
    pub ann_enabled: bool,
    /// Stores smaller than this are always scanned exactly.
    pub ann_min_entries: usize,
    pub ann_nprobe: usize,
    pub ann_iterations: usize,
    pub retrieve_k: usize,
    pub seed: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            dim: 256,
            ann_enabled: false,
            ann_min_entries: 512,
            ann_nprobe: 12,
            ann_iterations: 8,
            retrieve_k: 3,
            seed: 0,
        }
    }
}

/// Immutable view of the store at one point in time.
#[derive(Clone, Debug, Default)]
pub struct StoreState {
    pub entries: Vec<Experience>,
    index: Option<Arc<IvfIndex>>,
    next_seq: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    pub kept: usize,
    /// (dropped id, id of the kept entry at or above the threshold)
    pub dropped: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    format: String,
    version: u32,
    dim: usize,
    /// Next id to assign; ids of pruned entries are never reused.
    #[serde(default)]
    next_seq: u64,
}

/// Experience store. Readers take snapshots; writers are serialized and
/// publish a whole new state, so a reader never sees half a prune.
pub struct ExperienceStore {
    config: MemoryConfig,
    state: RwLock<Arc<StoreState>>,
    writer: Mutex<Option<PathBuf>>,
}

impl ExperienceStore {
    pub fn in_memory(config: MemoryConfig) -> Self {
        Self { config, state: RwLock::new(Arc::new(StoreState::default())), writer: Mutex::new(None) }
    }

    /// Opens (or creates) a line-delimited store file: a header line, then
    /// one experience per line. Inserts append; prune rewrites the file.
    pub fn open(path: impl AsRef<Path>, config: MemoryConfig) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let fmt_err = |message: String| MemoryError::Format { path: path.clone(), message };
        let mut state = StoreState::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut lines = reader.lines();
            if let Some(first) = lines.next() {
                let header: FileHeader = serde_json::from_str(&first?).map_err(|e| fmt_err(format!("header: {e}")))?;
                if header.format != STORE_FORMAT || header.version != STORE_VERSION {
                    return Err(fmt_err(format!("unsupported format {} v{}", header.format, header.version)));
                }
                if header.dim != config.dim {
                    return Err(MemoryError::Dimension { expected: config.dim, got: header.dim });
                }
                state.next_seq = header.next_seq;
                for (n, line) in lines.enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let e: Experience =
                        serde_json::from_str(&line).map_err(|e| fmt_err(format!("line {}: {e}", n + 2)))?;
                    state.next_seq = state.next_seq.max(e.id + 1);
                    state.entries.push(e);
                }
            }
        }
        Self::rewrite_file(&path, config.dim, &state)?;
        Ok(Self { config, state: RwLock::new(Arc::new(state)), writer: Mutex::new(Some(path)) })
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<StoreState> {
        self.state.read().expect("store lock").clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rewrite_file(path: &Path, dim: usize, state: &StoreState) -> Result<(), MemoryError> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            let header = FileHeader { format: STORE_FORMAT.into(), version: STORE_VERSION, dim, next_seq: state.next_seq };
            writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
            for e in &state.entries {
                writeln!(w, "{}", serde_json::to_string(e).expect("experience serializes"))?;
            }
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// Appends an experience; duplicates are allowed until the next prune.
    pub fn store(&self, mut exp: Experience) -> Result<u64, MemoryError> {
        if exp.summary.trim().is_empty() {
            return Err(MemoryError::EmptySummary);
        }
        if exp.embedding.len() != self.config.dim {
            return Err(MemoryError::Dimension { expected: self.config.dim, got: exp.embedding.len() });
        }
        let norm = dot64(&exp.embedding, &exp.embedding).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::ZeroVector.into());
        }
        for x in exp.embedding.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }

        let guard = self.writer.lock().expect("writer lock");
        let mut lock = self.state.write().expect("store lock");
        let state = Arc::make_mut(&mut lock);
        exp.id = state.next_seq;
        exp.created_at = state.next_seq;
        state.next_seq += 1;
        if let Some(path) = guard.as_ref() {
            let mut f = OpenOptions::new().append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&exp).expect("experience serializes"))?;
        }
        let id = exp.id;
        state.entries.push(exp);
        if self.config.ann_enabled && state.entries.len() >= self.config.ann_min_entries {
            let indexed = state.index.as_ref().map_or(0, |i| i.indexed());
            if state.entries.len() >= 2 * indexed.max(self.config.ann_min_entries / 2) {
                state.index = Some(Arc::new(self.build_index(&state.entries)));
            }
        }
        Ok(id)
    }

    fn build_index(&self, entries: &[Experience]) -> IvfIndex {
        let vectors: Vec<&[f32]> = entries.iter().map(|e| e.embedding.as_slice()).collect();
        IvfIndex::build(&vectors, 0, self.config.ann_iterations, self.config.seed)
    }

    /// Rebuilds the ANN index over all current entries.
    pub fn rebuild_index(&self) {
        let _guard = self.writer.lock().expect("writer lock");
        let mut lock = self.state.write().expect("store lock");
        let state = Arc::make_mut(&mut lock);
        state.index = Some(Arc::new(self.build_index(&state.entries)));
    }

    /// Top-k entries by cosine similarity, highest first (ties: earlier
    /// entry first). Uses the ANN index when enabled and built.
    pub fn retrieve(&self, query: &[f32], k: usize) -> Vec<(Experience, f64)> {
        let snap = self.snapshot();
        let qn = dot64(query, query).sqrt();
        if snap.entries.is_empty() || k == 0 || qn == 0.0 {
            return Vec::new();
        }
        let candidates: Vec<usize> = match (&snap.index, self.config.ann_enabled) {
            (Some(index), true) => {
                let mut c = index.candidates(query, self.config.ann_nprobe);
                c.extend(index.indexed()..snap.entries.len());
                c
            }
            _ => (0..snap.entries.len()).collect(),
        };
        let mut scored: Vec<(usize, f64)> = candidates
            .into_par_iter()
            .filter(|i| *i < snap.entries.len())
            .map(|i| (i, dot64(&snap.entries[i].embedding, query) / qn))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored.into_iter().map(|(i, s)| (snap.entries[i].clone(), s.clamp(-1.0, 1.0))).collect()
    }

    pub fn retrieve_text(&self, text: &str, embedder: &dyn Embedder, k: usize) -> Result<Vec<(Experience, f64)>, MemoryError> {
        let q = embed(text, embedder)?;
        Ok(self.retrieve(&q, k))
    }

    /// Greedy near-duplicate removal in creation order: an entry survives
    /// iff its cosine to every earlier survivor is below `tau`.
    pub fn prune(&self, tau: f64) -> Result<PruneReport, MemoryError> {
        let guard = self.writer.lock().expect("writer lock");
        let snap = self.snapshot();
        let mut kept: Vec<usize> = Vec::new();
        let mut dropped = Vec::new();
        let mut order: Vec<usize> = (0..snap.entries.len()).collect();
        order.sort_by_key(|&i| (snap.entries[i].created_at, snap.entries[i].id));
        for i in order {
            let e = &snap.entries[i].embedding;
            let witness = if kept.len() > 256 {
                kept.par_iter().find_first(|&&j| dot64(&snap.entries[j].embedding, e) >= tau).copied()
            } else {
                kept.iter().find(|&&j| dot64(&snap.entries[j].embedding, e) >= tau).copied()
            };
            match witness {
                Some(j) => dropped.push((snap.entries[i].id, snap.entries[j].id)),
                None => kept.push(i),
            }
        }
        let mut next = StoreState {
            entries: kept.iter().map(|&i| snap.entries[i].clone()).collect(),
            index: None,
            next_seq: snap.next_seq,
        };
        if self.config.ann_enabled && next.entries.len() >= self.config.ann_min_entries {
            next.index = Some(Arc::new(self.build_index(&next.entries)));
        }
        if let Some(path) = guard.as_ref() {
            Self::rewrite_file(path, self.config.dim, &next)?;
        }
        let report = PruneReport { kept: next.entries.len(), dropped };
        *self.state.write().expect("store lock") = Arc::new(next);
        Ok(report)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("summarizer failed: {0}")]
pub struct SummarizeError(pub String);

/// Distills a successful trajectory into one heuristic sentence.
pub trait Summarizer: Send + Sync {
    fn summarize(&self, trajectory: &[TrajectoryStep], ad_type: Option<AdType>) -> Result<String, SummarizeError>;
}

pub const MAX_SUMMARY_CHARS: usize = 240;

fn ad_phrase(ad_type: Option<AdType>) -> &'static str {
    match ad_type {
        Some(AdType::Embedded) => "embedded ads",
        Some(AdType::Popup) => "pop-up ads",
        Some(AdType::Custom) => "custom promotional pages",
        None => "advertisement displays",
    }
}

/// `Interacting with <widgets> often triggers <ad type>.`
#[derive(Clone, Debug, Default)]
pub struct TemplateSummarizer;

impl Summarizer for TemplateSummarizer {
    fn summarize(&self, trajectory: &[TrajectoryStep], ad_type: Option<AdType>) -> Result<String, SummarizeError> {
        let mut names: Vec<String> = Vec::new();
        for s in trajectory {
            let name = match &s.widget_label {
                Some(l) if !l.trim().is_empty() => format!("'{}'", l.trim()),
                _ => match s.action {
                    ActionKey::Back => "the back key".to_string(),
                    ActionKey::Scroll => "scrolling".to_string(),
                    _ => format!("a {}", s.widget_class.rsplit('.').next().unwrap_or(&s.widget_class)),
                },
            };
            if !names.contains(&name) {
                names.push(name);
            }
        }
        let tail = format!(" often triggers {}.", ad_phrase(ad_type));
        let budget = MAX_SUMMARY_CHARS - "Interacting with ".len() - tail.len();
        let mut list = String::new();
        for (i, n) in names.iter().enumerate() {
            let sep = match i {
                0 => "",
                _ if i + 1 == names.len() => " then ",
                _ => ", ",
            };
            if list.len() + sep.len() + n.len() > budget {
                break;
            }
            list.push_str(sep);
            list.push_str(n);
        }
        if list.is_empty() {
            list.push_str("these controls");
        }
        Ok(format!("Interacting with {list}{tail}"))
    }
}

/// Keeps the first sentence and caps the length.
pub fn clamp_sentence(text: &str) -> String {
    let text = text.trim().trim_matches('"').trim();
    let end = text.find(". ").map_or(text.len(), |i| i + 1);
    let mut s: String = text[..end].to_string();
    if s.chars().count() > MAX_SUMMARY_CHARS {
        s = s.chars().take(MAX_SUMMARY_CHARS - 1).collect();
        if let Some(cut) = s.rfind(' ') {
            s.truncate(cut);
        }
        s.push('.');
    }
    s
}

/// Summarizes with the given backend, falling back to the template when
/// the backend fails or returns nothing usable.
pub fn summarize_trajectory(
    trajectory: &[TrajectoryStep],
    ad_type: Option<AdType>,
    summarizer: &dyn Summarizer,
) -> Result<String, MemoryError> {
    if trajectory.is_empty() {
        return Err(MemoryError::EmptyTrajectory);
    }
    let raw = summarizer.summarize(trajectory, ad_type).unwrap_or_else(|e| {
        tracing::warn!(error = %e, "summarizer failed; using template");
        String::new()
    });
    let s = clamp_sentence(&raw);
    if !s.is_empty() {
        return Ok(s);
    }
    Ok(clamp_sentence(&TemplateSummarizer.summarize(trajectory, ad_type).expect("template is infallible")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f32]) -> Vec<f32> {
        let mut v = v.to_vec();
        normalize(&mut v).unwrap();
        v
    }

    fn exp(v: &[f32]) -> Experience {
        Experience::new("fp", unit(v), "s", "app", vec![])
    }

    fn small_store() -> ExperienceStore {
        ExperienceStore::in_memory(MemoryConfig { dim: 3, ..MemoryConfig::default() })
    }

    #[test]
    fn insert_and_self_retrieval() {
        let s = small_store();
        s.store(exp(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(s.len(), 1);
        let r = s.retrieve(&unit(&[1.0, 2.0, 3.0]), 1);
        assert!((r[0].1 - 1.0).abs() < 1e-6);
        s.store(exp(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn duplicates_collapse_to_the_earlier() {
        let s = small_store();
        let a = s.store(exp(&[1.0, 0.0, 0.0])).unwrap();
        s.store(exp(&[1.0, 0.0, 0.0])).unwrap();
        s.store(exp(&[0.0, 1.0, 0.0])).unwrap();
        let report = s.prune(0.95).unwrap();
        assert_eq!(report.kept, 2);
        assert_eq!(report.dropped, vec![(1, a)]);
        assert_eq!(s.snapshot().entries[0].id, a);
    }

    #[test]
    fn tau_one_keeps_distinct_entries() {
        let s = small_store();
        for v in [[1.0, 0.0, 0.0], [1.0, 0.1, 0.0], [0.0, 0.0, 1.0]] {
            s.store(exp(&v)).unwrap();
        }
        assert_eq!(s.prune(1.0).unwrap().kept, 3);
    }

    #[test]
    fn empty_store_and_bad_input() {
        let s = small_store();
        assert!(s.retrieve(&[1.0, 0.0, 0.0], 3).is_empty());
        assert!(matches!(s.store(Experience::new("f", vec![1.0, 0.0, 0.0], " ", "a", vec![])), Err(MemoryError::EmptySummary)));
        assert!(matches!(s.store(exp(&[1.0, 0.0])), Err(MemoryError::Dimension { .. })));
    }

    #[test]
    fn file_round_trip_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let cfg = MemoryConfig { dim: 3, ..MemoryConfig::default() };
        {
            let s = ExperienceStore::open(&path, cfg.clone()).unwrap();
            s.store(exp(&[1.0, 0.0, 0.0])).unwrap();
            s.store(exp(&[1.0, 0.0, 0.0])).unwrap();
        }
        let s = ExperienceStore::open(&path, cfg.clone()).unwrap();
        assert_eq!(s.len(), 2);
        s.prune(0.95).unwrap();
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 2);
        let s2 = ExperienceStore::open(&path, cfg).unwrap();
        assert_eq!(s2.len(), 1);
        let next = s2.store(exp(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(next, 2);
    }

    #[test]
    fn summaries() {
        let traj = vec![TrajectoryStep { action: ActionKey::Tap(3), widget_class: "android.widget.Button".into(), widget_label: Some("Watch".into()) }];
        let s = summarize_trajectory(&traj, Some(AdType::Popup), &TemplateSummarizer).unwrap();
        assert_eq!(s, "Interacting with 'Watch' often triggers pop-up ads.");
        assert!(matches!(summarize_trajectory(&[], None, &TemplateSummarizer), Err(MemoryError::EmptyTrajectory)));
        let long: Vec<TrajectoryStep> = (0..60)
            .map(|i| TrajectoryStep { action: ActionKey::Tap(i), widget_class: "Button".into(), widget_label: Some(format!("Item number {i}")) })
            .collect();
        let s = summarize_trajectory(&long, None, &TemplateSummarizer).unwrap();
        assert!(s.len() <= MAX_SUMMARY_CHARS && s.ends_with('.'));
    }
}
