use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, PromptBundle};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdvisorError {
    #[error("advisor unavailable: {0}")]
    Unavailable(String),
}

fn unavailable(msg: impl Into<String>) -> AdvisorError {
    AdvisorError::Unavailable(msg.into())
}

/// Anything that turns a prompt into reply text.
pub trait ChatClient: Send + Sync {
    fn query(&self, bundle: &PromptBundle) -> Result<String, AdvisorError>;
}

/// Replies looked up by scene digest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedClient {
    pub replies: BTreeMap<String, String>,
}

impl ScriptedClient {
    pub fn new(replies: BTreeMap<String, String>) -> Self {
        ScriptedClient { replies }
    }

    /// Reads a JSON object mapping digests to reply text.
    pub fn from_file(path: &Path) -> Result<Self, AdvisorError> {
        let text = std::fs::read_to_string(path).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
        let replies = serde_json::from_str(&text).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
        Ok(ScriptedClient { replies })
    }
}

impl ChatClient for ScriptedClient {
    fn query(&self, bundle: &PromptBundle) -> Result<String, AdvisorError> {
        self.replies
            .get(&bundle.scene_digest)
            .cloned()
            .ok_or_else(|| unavailable(format!("no scripted reply for scene {}", bundle.scene_digest)))
    }
}

/// One recorded exchange, stored as `<digest>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub scene_digest: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
}

/// Serves replies recorded by [`RecordingClient`].
#[derive(Debug, Clone)]
pub struct ReplayClient {
    dir: PathBuf,
}

impl ReplayClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayClient { dir: dir.into() }
    }
}

fn exchange_path(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.json"))
}

impl ChatClient for ReplayClient {
    fn query(&self, bundle: &PromptBundle) -> Result<String, AdvisorError> {
        let path = exchange_path(&self.dir, &bundle.scene_digest);
        let text = std::fs::read_to_string(&path).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
        let ex: Exchange = serde_json::from_str(&text).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
        Ok(ex.response)
    }
}

/// Forwards to an inner client and writes each successful exchange to `dir`.
pub struct RecordingClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: ChatClient> RecordingClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        RecordingClient { inner, dir: dir.into() }
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn query(&self, bundle: &PromptBundle) -> Result<String, AdvisorError> {
        let response = self.inner.query(bundle)?;
        let ex = Exchange {
            scene_digest: bundle.scene_digest.clone(),
            messages: bundle.messages(),
            response: response.clone(),
        };
        let write = std::fs::create_dir_all(&self.dir).and_then(|_| {
            let json = serde_json::to_string_pretty(&ex).expect("exchange serializes");
            std::fs::write(exchange_path(&self.dir, &bundle.scene_digest), json)
        });
        if let Err(e) = write {
            log::warn!("could not record exchange: {e}");
        }
        Ok(response)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Per-request timeout (s).
    pub timeout: f64,
    pub max_retries: u32,
    pub temperature: f64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            timeout: 30.0,
            max_retries: 2,
            temperature: 0.0,
            api_key_env: "DUALDRIVE_API_KEY".into(),
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout > 0.0) {
            return Err("llm timeout must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// HTTP chat-completion client with bounded retries on transport failure.
pub struct EndpointClient {
    cfg: ClientConfig,
    http: reqwest::blocking::Client,
    attempts: AtomicU32,
}

impl EndpointClient {
    pub fn new(cfg: ClientConfig) -> Result<Self, AdvisorError> {
        cfg.validate().map_err(unavailable)?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build()
            .map_err(|e| unavailable(e.to_string()))?;
        Ok(EndpointClient {
            cfg,
            http,
            attempts: AtomicU32::new(0),
        })
    }

    /// HTTP requests sent so far, retries included.
    pub fn attempts(&self) -> u32 {
        self.attempts.load(Ordering::Relaxed)
    }

    fn send_once(&self, body: &ChatRequest<'_>) -> Result<String, (bool, String)> {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let mut req = self.http.post(&self.cfg.endpoint).json(body);
        if let Ok(key) = std::env::var(&self.cfg.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            // server-side errors are worth retrying, client errors are not
            return Err((status.is_server_error() || status.as_u16() == 429, format!("HTTP {status}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| (false, e.to_string()))?;
        let text = parsed.choices.into_iter().next().map(|c| c.message.content).unwrap_or_default();
        if text.trim().is_empty() {
            return Err((false, "empty reply".into()));
        }
        Ok(text)
    }
}

impl ChatClient for EndpointClient {
    fn query(&self, bundle: &PromptBundle) -> Result<String, AdvisorError> {
        let body = ChatRequest {
            model: &self.cfg.model,
            temperature: self.cfg.temperature,
            messages: bundle.messages(),
        };
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err((retry, msg)) => {
                    log::warn!("advisor request {} failed: {msg}", attempt + 1);
                    last = msg;
                    if !retry {
                        break;
                    }
                }
            }
        }
        Err(unavailable(last))
    }
}
