//! Client for an OpenAI-compatible inference backend.
//!
//! Chat: `POST {base_url}/v1/chat/completions`, text read from
//! `choices[0].message.content`. Embeddings: `POST {base_url}/v1/embeddings`,
//! vector read from `data[0].embedding`.

use std::future::Future;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Model used for `/v1/embeddings`; falls back to `model_name`.
    pub embedding_model: Option<String>,
    pub timeout_ms: u64,
    pub max_parallel: usize,
    pub retry_limit: u32,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base_ms: u64,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:11434".into(),
            model_name: "default".into(),
            embedding_model: None,
            timeout_ms: 120_000,
            max_parallel: 4,
            retry_limit: 3,
            backoff_base_ms: 250,
        }
    }
}

impl LlmEndpointConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn embedding_model(&self) -> &str {
        self.embedding_model.as_deref().unwrap_or(&self.model_name)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_parallel == 0 {
            return Err(BackendError::Config("max_parallel must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout_ms must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(BackendError::Config(format!(
                "base_url must be an http(s) URL, got {:?}",
                self.base_url
            )));
        }
        Ok(())
    }
}

/// Sampling parameters forwarded with every chat request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.7,
            top_k: 50,
            max_tokens: 1024,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.top_k == 0 || self.max_tokens == 0 {
            return Err(BackendError::Config("top_k and max_tokens must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 || !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return Err(BackendError::Config(
                "temperature must be >= 0 and top_p in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("backend request timed out")]
    Timeout,
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend returned an empty response")]
    Empty,
    #[error("input text is empty")]
    EmptyInput,
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

impl BackendError {
    fn retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

impl From<reqwest::Error> for BackendError {
    fn from(e: reqwest::Error) -> Self {
        if e.is_timeout() {
            BackendError::Timeout
        } else {
            BackendError::Transport(e.to_string())
        }
    }
}

/// Anything that maps text to an embedding vector.
pub trait Embedder: Sync {
    fn embed(&self, text: &str) -> impl Future<Output = Result<Vec<f32>, BackendError>> + Send;
}

#[derive(Debug, Clone)]
pub struct BackendClient {
    cfg: LlmEndpointConfig,
    http: reqwest::Client,
}

impl BackendClient {
    pub fn new(cfg: LlmEndpointConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { cfg, http })
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    async fn post_once(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let resp = self.http.post(self.url(path)).json(body).send().await?;
        let status = resp.status();
        let text = resp.text().await?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))
    }

    async fn post(&self, path: &str, body: &Value, retry: bool) -> Result<Value, BackendError> {
        let mut attempt = 0;
        loop {
            match self.post_once(path, body).await {
                Err(e) if retry && e.retryable() && attempt < self.cfg.retry_limit => {
                    let wait = self.cfg.backoff_base_ms.saturating_mul(1 << attempt.min(20));
                    warn!(path, attempt, error = %e, wait_ms = wait, "retrying backend request");
                    tokio::time::sleep(Duration::from_millis(wait)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn chat_body(&self, prompt: &str, params: &GenerationParams) -> Value {
        json!({
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "top_k": params.top_k,
            "max_tokens": params.max_tokens,
        })
    }

    /// Single-turn chat completion with retries.
    pub async fn chat(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let value = self.post("/v1/chat/completions", &self.chat_body(prompt, params), true).await?;
        let text = extract_chat_content(&value)?;
        debug!(chars = text.len(), "chat completion received");
        Ok(text)
    }

    /// Chat completion without retries, for callers that map failures to
    /// their own responses.
    pub async fn chat_once(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let value = self.post("/v1/chat/completions", &self.chat_body(prompt, params), false).await?;
        extract_chat_content(&value)
    }

    /// One-token request used as a liveness probe.
    pub async fn probe(&self) -> Result<(), BackendError> {
        let params = GenerationParams {
            max_tokens: 1,
            ..Default::default()
        };
        self.post("/v1/chat/completions", &self.chat_body("ping", &params), false)
            .await
            .map(|_| ())
    }

    pub async fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        if text.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        let body = json!({"model": self.cfg.embedding_model(), "input": text});
        let value = self.post("/v1/embeddings", &body, true).await?;
        extract_embedding(&value)
    }
}

impl Embedder for BackendClient {
    fn embed(&self, text: &str) -> impl Future<Output = Result<Vec<f32>, BackendError>> + Send {
        self.embed_text(text)
    }
}

fn extract_chat_content(value: &Value) -> Result<String, BackendError> {
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
}

fn extract_embedding(value: &Value) -> Result<Vec<f32>, BackendError> {
    let arr = value
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Malformed("missing data[0].embedding".into()))?;
    arr.iter()
        .map(|v| {
            v.as_f64()
                .map(|x| x as f32)
                .ok_or_else(|| BackendError::Malformed("non-numeric embedding component".into()))
        })
        .collect()
}
