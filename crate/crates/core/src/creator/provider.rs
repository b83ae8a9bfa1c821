//! Chat-completion providers: an OpenAI-compatible HTTP client, a fixture
//! replayer for hermetic runs, a recorder that writes those fixtures, and a
//! closure-backed provider for tests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::oracle::hex_digest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(s: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: s.into(),
        }
    }

    pub fn user(s: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: s.into(),
        }
    }

    pub fn assistant(s: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: s.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    /// Sampling seed. Distinguishes repeated calls with the same prompt,
    /// such as the three critic votes.
    pub seed: u64,
}

impl ChatRequest {
    /// Replay key: sha256 over the messages, the temperature to three
    /// decimals and the seed.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.messages {
            h.update(serde_json::to_string(&m.role).unwrap().as_bytes());
            h.update([0]);
            h.update(m.content.as_bytes());
            h.update([0]);
        }
        h.update(format!("t={:.3};s={}", self.temperature, self.seed).as_bytes());
        hex_digest(&h.finalize())
    }

    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected provider response: {0}")]
    Response(String),
    #[error("environment variable `{0}` with the API key is not set")]
    MissingApiKey(String),
    #[error("no transcript fixture for request digest {digest} (temperature {temperature}, seed {seed}); the prompt changed or the fixture was never recorded")]
    MissingFixture {
        digest: String,
        temperature: f64,
        seed: u64,
    },
    #[error("{0}")]
    Scripted(String),
}

pub trait Provider: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTemperatures {
    pub description: f64,
    pub implementation: f64,
    pub critic: f64,
}

impl Default for StageTemperatures {
    fn default() -> Self {
        Self {
            description: 1.0,
            implementation: 0.0,
            critic: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Base URL; requests go to `<endpoint>/chat/completions`.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperatures: StageTemperatures,
    pub timeout_secs: u64,
    /// Corrective retries after a reply that cannot be parsed.
    pub max_retries: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model_id: "gpt-4".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperatures: StageTemperatures::default(),
            timeout_secs: 120,
            max_retries: 3,
        }
    }
}

pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

impl Provider for HttpProvider {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "seed": req.seed,
        });
        let mut builder = self.client.post(&url).json(&body);
        if let Some(var) = &self.config.api_key_env {
            let key = std::env::var(var).map_err(|_| ProviderError::MissingApiKey(var.clone()))?;
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| ProviderError::Response(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Response("no message content in first choice".into()))
    }
}

/// One recorded exchange, stored as `<digest>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub digest: String,
    pub temperature: f64,
    pub seed: u64,
    pub messages: Vec<Message>,
    pub reply: String,
}

/// Replays transcripts from a directory. Requests without a recorded
/// transcript fail rather than fall back to anything else.
pub struct MockProvider {
    transcripts: BTreeMap<String, Transcript>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut transcripts = BTreeMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let t: Transcript = serde_json::from_slice(&fs::read(&p)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
            transcripts.insert(t.digest.clone(), t);
        }
        Ok(Self {
            transcripts,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.transcripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for MockProvider {
    fn model_id(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let digest = req.digest();
        match self.transcripts.get(&digest) {
            Some(t) => Ok(t.reply.clone()),
            None => {
                log::error!("mock provider has no transcript {digest}");
                Err(ProviderError::MissingFixture {
                    digest,
                    temperature: req.temperature,
                    seed: req.seed,
                })
            }
        }
    }
}

/// Forwards to another provider and writes each exchange as a transcript.
pub struct RecordingProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let reply = self.inner.complete(req)?;
        let t = Transcript {
            digest: req.digest(),
            temperature: req.temperature,
            seed: req.seed,
            messages: req.messages.clone(),
            reply: reply.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&t).expect("transcript serializes");
        bytes.push(b'\n');
        fs::write(self.dir.join(format!("{}.json", t.digest)), bytes)
            .map_err(|e| ProviderError::Transport(format!("recording failed: {e}")))?;
        Ok(reply)
    }
}

type Script = dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync;

pub struct ScriptedProvider {
    script: Box<Script>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(f: impl Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        Self {
            script: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(req)
    }
}
