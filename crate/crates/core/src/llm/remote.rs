use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::memory::{EmbedError, Embedder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    pub embeddings_endpoint: String,
    pub model: String,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub temperature: f64,
    pub timeout_seconds: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            embeddings_endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            embedding_dim: 1536,
            temperature: 0.0,
            timeout_seconds: 60.0,
            max_retries: 4,
            backoff_base_ms: 500,
            backoff_cap_ms: 8000,
            api_key_env: "ADNAV_API_KEY".into(),
        }
    }
}

struct HttpJson {
    agent: ureq::Agent,
    config: RemoteConfig,
    api_key: Option<String>,
}

impl HttpJson {
    fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self { agent, config, api_key }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| BackendError::Transport { message: e.to_string(), retriable: true })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport { message: e.to_string(), retriable: true })?;
        if !(200..300).contains(&status) {
            let retriable = status == 408 || status == 429 || status >= 500;
            return Err(BackendError::Transport { message: format!("HTTP {status}: {text}"), retriable });
        }
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Transport { message: format!("bad JSON body: {e}"), retriable: false })
    }

    /// POST with capped exponential backoff on retriable failures.
    fn post(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            let started = std::time::Instant::now();
            match self.post_once(url, body) {
                Ok(v) => {
                    tracing::debug!(url, attempt, elapsed_ms = started.elapsed().as_millis() as u64, "request ok");
                    return Ok(v);
                }
                Err(BackendError::Transport { message, retriable }) => {
                    tracing::warn!(url, attempt, %message, retriable, "request failed");
                    if !retriable {
                        return Err(BackendError::Transport { message, retriable });
                    }
                    last = message;
                    if attempt + 1 < attempts {
                        let wait = self
                            .config
                            .backoff_base_ms
                            .saturating_mul(1u64 << attempt.min(20))
                            .min(self.config.backoff_cap_ms);
                        std::thread::sleep(Duration::from_millis(wait));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(BackendError::RetriesExhausted { attempts, last })
    }
}

/// Chat-completions client (OpenAI-compatible wire format).
pub struct RemoteChatClient {
    http: HttpJson,
}

impl RemoteChatClient {
    pub fn new(config: RemoteConfig) -> Self {
        Self { http: HttpJson::new(config) }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.http.config
    }
}

impl ChatBackend for RemoteChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let cfg = &self.http.config;
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let body = json!({"model": cfg.model, "temperature": cfg.temperature, "messages": messages});
        tracing::debug!(kind = ?request.kind, chars = request.user.len(), "chat request");
        let reply = self.http.post(&cfg.endpoint, &body)?;
        let content = reply["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Transport { message: "reply has no message content".into(), retriable: false })?;
        tracing::debug!(kind = ?request.kind, reply = content, "chat reply");
        Ok(content.to_string())
    }
}

/// Embeddings endpoint client.
pub struct RemoteEmbedder {
    http: HttpJson,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig) -> Self {
        Self { http: HttpJson::new(config) }
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.http.config.embedding_dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let cfg = &self.http.config;
        let body = json!({"model": cfg.embedding_model, "input": text});
        let reply = self.http.post(&cfg.embeddings_endpoint, &body).map_err(|e| EmbedError::Backend {
            retriable: matches!(e, BackendError::RetriesExhausted { .. }),
            message: e.to_string(),
        })?;
        let v: Vec<f32> = reply["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbedError::Backend { message: "reply has no embedding".into(), retriable: false })?
            .iter()
            .filter_map(|x| x.as_f64().map(|f| f as f32))
            .collect();
        if v.len() != self.dim() {
            return Err(EmbedError::Backend {
                message: format!("embedding has {} dimensions, expected {}", v.len(), self.dim()),
                retriable: false,
            });
        }
        Ok(v)
    }
}
