//! Dispatch of rendered prompts to a completion backend.
//!
//! The [`Gateway`] owns the retry loop, the response cache and the bounded
//! dispatch pool; backends only perform single attempts. Two backends ship:
//! an OpenAI-compatible chat-completion client and a deterministic offline
//! mock keyed on the prompt hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::error::{Error, Result};
use crate::prompt::{Level, RenderedPrompt, ResponseSchema, Subject};
use crate::rubric::{RubricMapping, Trait};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Mock,
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_output_tokens() -> u32 {
    512
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_concurrency() -> usize {
    4
}
fn default_api_key_env() -> String {
    "LLM_API_KEY".to_string()
}
fn default_backoff_base_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub system_message: Option<String>,
    /// First retry delay; later delays double, with +/-20% jitter.
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
}

impl BackendConfig {
    pub fn mock(model_name: impl Into<String>, seed: u64) -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_concurrency: default_max_concurrency(),
            seed: Some(seed),
            api_key_env: default_api_key_env(),
            system_message: None,
            backoff_base_ms: default_backoff_base_ms(),
        }
    }

    pub fn http(model_name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::HttpChat,
            endpoint: Some(endpoint.into()),
            seed: None,
            ..Self::mock(model_name, 0)
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let name = &self.model_name;
        if name.trim().is_empty() {
            out.push("backend model_name is empty".to_string());
        }
        match self.kind {
            BackendKind::HttpChat => {
                if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    out.push(format!("{name}: http_chat backend requires an endpoint"));
                }
            }
            BackendKind::Mock => {
                if self.seed.is_none() {
                    out.push(format!("{name}: mock backend requires a seed"));
                }
            }
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            out.push(format!("{name}: temperature must be >= 0"));
        }
        if self.max_output_tokens == 0 {
            out.push(format!("{name}: max_output_tokens must be positive"));
        }
        if self.max_concurrency == 0 {
            out.push(format!("{name}: max_concurrency must be positive"));
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            out.push(format!("{name}: timeout_secs must be positive"));
        }
        out
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Identity used to key the response cache.
    pub fn cache_identity(&self) -> String {
        match self.kind {
            BackendKind::HttpChat => self.model_name.clone(),
            BackendKind::Mock => format!("{}#seed={}", self.model_name, self.seed.unwrap_or(0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionStatus {
    Ok,
    TransportError,
    Timeout,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_hash: String,
    pub essay_id: String,
    pub level: Level,
    pub subject: Subject,
    pub model_name: String,
    pub raw_text: String,
    pub status: CompletionStatus,
    pub attempts: u32,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Outcome of a single backend attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    Transport { message: String, retryable: bool },
    Timeout,
    Empty,
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    async fn send(&self, prompt: &RenderedPrompt) -> std::result::Result<String, AttemptError>;
}

/// Deterministic offline backend.
pub struct MockBackend {
    seed: u64,
    mapping: RubricMapping,
}

impl MockBackend {
    pub fn new(seed: u64, mapping: RubricMapping) -> Self {
        Self { seed, mapping }
    }
}

#[async_trait]
impl CompletionBackend for MockBackend {
    async fn send(&self, prompt: &RenderedPrompt) -> std::result::Result<String, AttemptError> {
        let schema = prompt.response_schema(&self.mapping);
        Ok(mock_generate(&prompt.content_hash, self.seed, &schema))
    }
}

fn keyed_rng(prompt_hash: &str, seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(prompt_hash.as_bytes());
    h.update([0]);
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    ChaCha8Rng::from_seed(digest.into())
}

/// Mock answer for a prompt: a fenced JSON block whose trait scores are drawn
/// uniformly from each trait's range by a generator keyed on
/// `(prompt_hash, seed, trait)`.
pub fn mock_generate(prompt_hash: &str, seed: u64, schema: &ResponseSchema) -> String {
    let draw = |t: Trait| -> u8 {
        keyed_rng(prompt_hash, seed, t.key()).gen_range(t.min_score()..=t.max_score())
    };
    let mut obj = serde_json::Map::new();
    let single = schema.justification && schema.traits.len() == 1;
    if single {
        obj.insert("score".into(), draw(schema.traits[0]).into());
    } else {
        let mut total = 0u32;
        for &t in &schema.traits {
            let s = draw(t);
            total += u32::from(s);
            obj.insert(t.key().into(), s.into());
        }
        if schema.total {
            obj.insert("total".into(), total.into());
        }
    }
    if schema.justification {
        obj.insert(
            "justification".into(),
            format!(
                "mock rationale {}",
                &prompt_hash[..prompt_hash.len().min(8)]
            )
            .into(),
        );
    }
    format!(
        "```json\n{}\n```",
        serde_json::to_string(&serde_json::Value::Object(obj)).expect("json")
    )
}

/// OpenAI-compatible chat-completion client.
pub struct HttpChatBackend {
    client: reqwest::Client,
    url: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    api_key: Option<String>,
    system_message: Option<String>,
}

impl HttpChatBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config(vec![format!("{}: missing endpoint", cfg.model_name)]))?;
        let url = if endpoint
            .trim_end_matches('/')
            .ends_with("/chat/completions")
        {
            endpoint
        } else {
            format!("{}/chat/completions", endpoint.trim_end_matches('/'))
        };
        let client = reqwest::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| Error::Config(vec![e.to_string()]))?;
        Ok(Self {
            client,
            url,
            model: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_output_tokens,
            api_key: std::env::var(&cfg.api_key_env)
                .ok()
                .filter(|k| !k.is_empty()),
            system_message: cfg.system_message.clone(),
        })
    }

    pub fn request_body(&self, prompt: &RenderedPrompt) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.system_message {
            messages.push(serde_json::json!({"role": "system", "content": system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": prompt.text}));
        serde_json::json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

/// Pulls the first choice's message content out of a chat-completion response.
pub fn extract_chat_content(body: &serde_json::Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

#[async_trait]
impl CompletionBackend for HttpChatBackend {
    async fn send(&self, prompt: &RenderedPrompt) -> std::result::Result<String, AttemptError> {
        let mut req = self.client.post(&self.url).json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport {
                    message: e.to_string(),
                    retryable: true,
                }
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let code = status.as_u16();
            return Err(AttemptError::Transport {
                message: format!("HTTP {status}"),
                retryable: code == 408 || code == 429 || status.is_server_error(),
            });
        }
        let body: serde_json::Value = resp.json().await.map_err(|e| AttemptError::Transport {
            message: format!("invalid response body: {e}"),
            retryable: true,
        })?;
        match extract_chat_content(&body) {
            Some(text) if !text.trim().is_empty() => Ok(text),
            _ => Err(AttemptError::Empty),
        }
    }
}

/// Append-only JSONL store of successful completions, keyed by prompt hash.
pub struct ResponseCache {
    entries: HashMap<String, CompletionRecord>,
    file: Option<File>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            entries: HashMap::new(),
            file: None,
        }
    }

    /// Opens (or creates) a cache file. An unparseable line, such as a
    /// record truncated by an interrupted write, is skipped.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<CompletionRecord>(&line) {
                    Ok(rec) => {
                        entries.entry(rec.prompt_hash.clone()).or_insert(rec);
                    }
                    Err(e) => tracing::warn!(path = %path.display(), "skipping cache line: {e}"),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            entries,
            file: Some(file),
        })
    }

    pub fn get(&self, prompt_hash: &str) -> Option<&CompletionRecord> {
        self.entries.get(prompt_hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn insert(&mut self, record: &CompletionRecord) -> std::io::Result<()> {
        if self.entries.contains_key(&record.prompt_hash) {
            return Ok(());
        }
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries
            .insert(record.prompt_hash.clone(), record.clone());
        Ok(())
    }
}

/// Cache file for a backend inside a cache directory.
pub fn cache_file(dir: &Path, cfg: &BackendConfig) -> PathBuf {
    let safe: String = cfg
        .cache_identity()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join(format!("{safe}.jsonl"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DispatchStats {
    /// Backend attempts actually made.
    pub invocations: usize,
    pub cache_hits: usize,
    pub peak_in_flight: usize,
}

pub struct Gateway {
    cfg: BackendConfig,
    backend: Arc<dyn CompletionBackend>,
    cache: Mutex<ResponseCache>,
    permits: Semaphore,
    invocations: AtomicUsize,
    cache_hits: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl Gateway {
    pub fn new(
        cfg: BackendConfig,
        backend: Arc<dyn CompletionBackend>,
        cache: ResponseCache,
    ) -> Self {
        let permits = Semaphore::new(cfg.max_concurrency.max(1));
        Self {
            cfg,
            backend,
            cache: Mutex::new(cache),
            permits,
            invocations: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    /// Builds the configured backend, with an optional on-disk cache.
    pub fn from_config(
        cfg: BackendConfig,
        cache_dir: Option<&Path>,
        mapping: &RubricMapping,
    ) -> Result<Self> {
        let violations = cfg.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let backend: Arc<dyn CompletionBackend> = match cfg.kind {
            BackendKind::Mock => Arc::new(MockBackend::new(cfg.seed.unwrap_or(0), mapping.clone())),
            BackendKind::HttpChat => Arc::new(HttpChatBackend::new(&cfg)?),
        };
        let cache = match cache_dir {
            Some(dir) => ResponseCache::open(&cache_file(dir, &cfg))?,
            None => ResponseCache::in_memory(),
        };
        Ok(Self::new(cfg, backend, cache))
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn stats(&self) -> DispatchStats {
        DispatchStats {
            invocations: self.invocations.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            peak_in_flight: self.peak_in_flight.load(Ordering::SeqCst),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.cfg.backoff_base_ms as f64 * 2f64.powi(retry as i32);
        let jitter = rand::thread_rng().gen_range(-0.2..=0.2);
        Duration::from_secs_f64((base * (1.0 + jitter)).max(0.0) / 1000.0)
    }

    fn record(&self, prompt: &RenderedPrompt) -> CompletionRecord {
        CompletionRecord {
            prompt_hash: prompt.content_hash.clone(),
            essay_id: prompt.essay_id.clone(),
            level: prompt.level,
            subject: prompt.subject,
            model_name: self.cfg.model_name.clone(),
            raw_text: String::new(),
            status: CompletionStatus::TransportError,
            attempts: 0,
            timestamp: String::new(),
            error: None,
        }
    }

    pub async fn complete(&self, prompt: &RenderedPrompt) -> CompletionRecord {
        let cached = self
            .cache
            .lock()
            .expect("cache lock")
            .get(&prompt.content_hash)
            .cloned();
        if let Some(mut hit) = cached {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            hit.essay_id = prompt.essay_id.clone();
            hit.level = prompt.level;
            hit.subject = prompt.subject;
            return hit;
        }

        let mut rec = self.record(prompt);
        let max_attempts = self.cfg.max_retries + 1;
        for attempt in 0..max_attempts {
            if attempt > 0 {
                tokio::time::sleep(self.backoff(attempt - 1)).await;
            }
            rec.attempts = attempt + 1;
            let outcome = {
                let _permit = self.permits.acquire().await.expect("semaphore closed");
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                self.invocations.fetch_add(1, Ordering::SeqCst);
                let r = tokio::time::timeout(self.cfg.timeout(), self.backend.send(prompt)).await;
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                r.unwrap_or(Err(AttemptError::Timeout))
            };
            match outcome {
                Ok(text) if !text.trim().is_empty() => {
                    rec.raw_text = text;
                    rec.status = CompletionStatus::Ok;
                    rec.error = None;
                    break;
                }
                Ok(_) | Err(AttemptError::Empty) => {
                    rec.status = CompletionStatus::Empty;
                    rec.error = Some("empty completion".into());
                }
                Err(AttemptError::Timeout) => {
                    rec.status = CompletionStatus::Timeout;
                    rec.error = Some("timed out".into());
                }
                Err(AttemptError::Transport { message, retryable }) => {
                    rec.status = CompletionStatus::TransportError;
                    rec.error = Some(message);
                    if !retryable {
                        break;
                    }
                }
            }
        }
        rec.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        if rec.status == CompletionStatus::Ok {
            if let Err(e) = self.cache.lock().expect("cache lock").insert(&rec) {
                tracing::warn!("failed to append to response cache: {e}");
            }
        } else {
            tracing::warn!(
                essay = %rec.essay_id,
                subject = %rec.subject,
                model = %rec.model_name,
                attempts = rec.attempts,
                "completion failed: {}",
                rec.error.as_deref().unwrap_or("")
            );
        }
        rec
    }

    /// Completes every prompt with at most `max_concurrency` in flight;
    /// records come back in input order.
    pub async fn complete_all(&self, prompts: &[RenderedPrompt]) -> Vec<CompletionRecord> {
        stream::iter(prompts)
            .map(|p| self.complete(p))
            .buffered(self.cfg.max_concurrency.max(1))
            .collect()
            .await
    }
}
