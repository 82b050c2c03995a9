//! Chat-completion backends: a remote HTTP client, transcript recording
//! and replay, and adapters that put the vision and summary ports on top
//! of a chat backend.

mod remote;

pub use remote::{RemoteChatClient, RemoteConfig, RemoteEmbedder};

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::AdType;
use crate::memory::{SummarizeError, Summarizer, TrajectoryStep};
use crate::perception::{CaptionError, CaptionRequest, VisionCaptioner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Decision,
    Summary,
    Caption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub kind: RequestKind,
    pub system: String,
    pub user: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {message}")]
    Transport { message: String, retriable: bool },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("transcript has no more {0:?} replies")]
    TranscriptExhausted(RequestKind),
    #[error("transcript prompt mismatch at {kind:?} #{index}")]
    TranscriptMismatch { kind: RequestKind, index: usize },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transcript I/O: {0}")]
    Io(String),
}

/// Text-in, text-out chat port. Implementations must tolerate concurrent
/// calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// One line of a transcript file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub kind: RequestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub reply: String,
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>, BackendError> {
    let file = File::open(path.as_ref()).map_err(|e| BackendError::Io(e.to_string()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BackendError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| BackendError::Io(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Answers each request kind from its own queue of recorded replies, in
/// order. In strict mode a recorded prompt must equal the live one.
pub struct ReplayBackend {
    queues: Mutex<HashMap<RequestKind, VecDeque<TranscriptRecord>>>,
    served: Mutex<HashMap<RequestKind, usize>>,
    strict: bool,
}

impl ReplayBackend {
    pub fn new(records: Vec<TranscriptRecord>, strict: bool) -> Self {
        let mut queues: HashMap<RequestKind, VecDeque<TranscriptRecord>> = HashMap::new();
        for r in records {
            queues.entry(r.kind).or_default().push_back(r);
        }
        Self { queues: Mutex::new(queues), served: Mutex::new(HashMap::new()), strict }
    }

    pub fn from_file(path: impl AsRef<Path>, strict: bool) -> Result<Self, BackendError> {
        Ok(Self::new(read_transcript(path)?, strict))
    }

    pub fn remaining(&self, kind: RequestKind) -> usize {
        self.queues.lock().expect("replay lock").get(&kind).map_or(0, VecDeque::len)
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let rec = self
            .queues
            .lock()
            .expect("replay lock")
            .get_mut(&request.kind)
            .and_then(VecDeque::pop_front)
            .ok_or(BackendError::TranscriptExhausted(request.kind))?;
        let mut served = self.served.lock().expect("replay lock");
        let index = served.entry(request.kind).or_default();
        *index += 1;
        if let Some(p) = &rec.prompt {
            if *p != request.user {
                if self.strict {
                    return Err(BackendError::TranscriptMismatch { kind: request.kind, index: *index });
                }
                tracing::warn!(kind = ?request.kind, index = *index, "replayed prompt differs from live prompt");
            }
        }
        Ok(rec.reply)
    }
}

/// Forwards to an inner backend and appends every exchange to a
/// transcript file.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    out: Mutex<File>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())
            .map_err(|e| BackendError::Io(e.to_string()))?;
        Ok(Self { inner, out: Mutex::new(out) })
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let reply = self.inner.complete(request)?;
        let rec = TranscriptRecord { kind: request.kind, prompt: Some(request.user.clone()), reply: reply.clone() };
        let mut f = self.out.lock().expect("transcript lock");
        writeln!(f, "{}", serde_json::to_string(&rec).expect("record serializes")).map_err(|e| BackendError::Io(e.to_string()))?;
        Ok(reply)
    }
}

/// Vision captioning through a chat backend.
pub struct ChatCaptioner {
    pub backend: Arc<dyn ChatBackend>,
}

impl VisionCaptioner for ChatCaptioner {
    fn caption(&self, request: &CaptionRequest) -> Result<String, CaptionError> {
        let req = ChatRequest { kind: RequestKind::Caption, system: String::new(), user: request.to_prompt() };
        self.backend.complete(&req).map_err(|e| CaptionError::Transport(e.to_string()))
    }
}

pub const SUMMARY_INSTRUCTION: &str = "You review successful test sessions of Android apps. \
The steps below ended with an advertisement on screen. \
Write one sentence of at most 240 characters, in the form \
\"Interacting with <kind of element> often triggers <kind of ad>.\", \
that would help find similar ads in other apps. Reply with the sentence only.";

/// Step lines handed to a chat summarizer.
pub fn trajectory_lines(trajectory: &[TrajectoryStep]) -> String {
    trajectory
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let class = s.widget_class.rsplit('.').next().unwrap_or(&s.widget_class);
            let label = s.widget_label.as_deref().unwrap_or("");
            format!("Step {}: Touched a '{}' with text/desc: '{}'.", i + 1, class, label)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Trajectory summarization through a chat backend.
pub struct ChatSummarizer {
    pub backend: Arc<dyn ChatBackend>,
}

impl Summarizer for ChatSummarizer {
    fn summarize(&self, trajectory: &[TrajectoryStep], ad_type: Option<AdType>) -> Result<String, SummarizeError> {
        let mut user = format!("{SUMMARY_INSTRUCTION}\n{}", trajectory_lines(trajectory));
        if let Some(t) = ad_type {
            user.push_str(&format!("\nObserved ad type: {}.", t.as_str()));
        }
        let req = ChatRequest { kind: RequestKind::Summary, system: String::new(), user };
        self.backend.complete(&req).map_err(|e| SummarizeError(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(kind: RequestKind, user: &str) -> ChatRequest {
        ChatRequest { kind, system: String::new(), user: user.into() }
    }

    #[test]
    fn replay_serves_per_kind_queues_in_order() {
        let b = ReplayBackend::new(
            vec![
                TranscriptRecord { kind: RequestKind::Decision, prompt: None, reply: "a".into() },
                TranscriptRecord { kind: RequestKind::Summary, prompt: None, reply: "s".into() },
                TranscriptRecord { kind: RequestKind::Decision, prompt: None, reply: "b".into() },
            ],
            false,
        );
        assert_eq!(b.complete(&req(RequestKind::Summary, "")).unwrap(), "s");
        assert_eq!(b.complete(&req(RequestKind::Decision, "")).unwrap(), "a");
        assert_eq!(b.complete(&req(RequestKind::Decision, "")).unwrap(), "b");
        assert_eq!(b.complete(&req(RequestKind::Decision, "")), Err(BackendError::TranscriptExhausted(RequestKind::Decision)));
    }

    #[test]
    fn strict_replay_rejects_changed_prompts() {
        let rec = TranscriptRecord { kind: RequestKind::Decision, prompt: Some("p".into()), reply: "r".into() };
        let b = ReplayBackend::new(vec![rec.clone()], true);
        assert!(matches!(b.complete(&req(RequestKind::Decision, "q")), Err(BackendError::TranscriptMismatch { .. })));
        let b = ReplayBackend::new(vec![rec], true);
        assert_eq!(b.complete(&req(RequestKind::Decision, "p")).unwrap(), "r");
    }

    #[test]
    fn recording_round_trips_through_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let inner: Arc<dyn ChatBackend> = Arc::new(ReplayBackend::new(
            vec![TranscriptRecord { kind: RequestKind::Caption, prompt: None, reply: "[]".into() }],
            false,
        ));
        let rec = RecordingBackend::new(inner, &path).unwrap();
        rec.complete(&req(RequestKind::Caption, "crop")).unwrap();
        let records = read_transcript(&path).unwrap();
        assert_eq!(records, [TranscriptRecord { kind: RequestKind::Caption, prompt: Some("crop".into()), reply: "[]".into() }]);
    }

    #[test]
    fn trajectory_lines_format() {
        let t = vec![TrajectoryStep {
            action: crate::app_model::ActionKey::Tap(0),
            widget_class: "android.widget.ImageButton".into(),
            widget_label: Some("Open navigation drawer".into()),
        }];
        assert_eq!(trajectory_lines(&t), "Step 1: Touched a 'ImageButton' with text/desc: 'Open navigation drawer'.");
    }
}
