//! Scripted stand-in for the chat-completions and embeddings API.
//!
//! Runs an HTTP server on its own thread and runtime so it can be used from
//! synchronous code, async tests and CLI invocations alike. Embeddings come
//! from [`HashEmbedder`], which is also usable in-process.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::backend::{BackendError, Embedder};
use crate::metrics::tokenize;
use crate::prompts::SUMMARIZATION_PREFIX;

/// What the stub answers to one chat request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubReply {
    Text(String),
    Status(u16, String),
    /// Never answers within any reasonable client timeout.
    Hang,
}

pub type ChatScript = Arc<dyn Fn(&str) -> StubReply + Send + Sync>;

/// Answers every prompt with the prompt itself.
pub fn echo() -> ChatScript {
    Arc::new(|prompt| StubReply::Text(prompt.to_string()))
}

pub fn fixed(text: &str) -> ChatScript {
    let text = text.to_string();
    Arc::new(move |_| StubReply::Text(text.clone()))
}

/// Deterministic summary for a summarization prompt: the email's words
/// listed after a leading `Instruction:` marker.
pub fn summary_for(prompt: &str) -> String {
    let body = prompt.strip_prefix(SUMMARIZATION_PREFIX).unwrap_or(prompt);
    let words: Vec<String> = tokenize(body).as_slice().iter().take(12).cloned().collect();
    format!("Instruction: Write an email covering: {}.", words.join(", "))
}

pub fn summarizer() -> ChatScript {
    Arc::new(|prompt| StubReply::Text(summary_for(prompt)))
}

/// Feature-hashing bag-of-words embedder: each canonical token adds a
/// signed unit to one of `dim` buckets (FNV-1a hash). Texts without tokens
/// map to a fixed unit vector so the result is never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    pub fn embed_sync(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        let tokens = tokenize(text);
        for t in tokens.as_slice() {
            let h = fnv1a(t.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> impl Future<Output = Result<Vec<f32>, BackendError>> + Send {
        let result = if text.is_empty() {
            Err(BackendError::EmptyInput)
        } else {
            Ok(self.embed_sync(text))
        };
        std::future::ready(result)
    }
}

#[derive(Clone)]
pub struct StubConfig {
    pub chat: ChatScript,
    pub embedder: HashEmbedder,
    /// Added latency before every chat reply.
    pub chat_delay: Duration,
}

impl StubConfig {
    pub fn new(chat: ChatScript) -> Self {
        Self {
            chat,
            embedder: HashEmbedder::default(),
            chat_delay: Duration::ZERO,
        }
    }
}

#[derive(Default)]
struct Counters {
    prompts: Mutex<Vec<String>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    embed_calls: AtomicUsize,
}

struct StubState {
    cfg: StubConfig,
    counters: Counters,
}

pub struct StubBackend {
    url: String,
    state: Arc<StubState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl StubBackend {
    /// Binds an ephemeral localhost port and serves until dropped.
    pub fn start(cfg: StubConfig) -> Self {
        let state = Arc::new(StubState {
            cfg,
            counters: Counters::default(),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/v1/embeddings", post(embeddings))
            .with_state(state.clone());
        let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
        let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(4)
                .enable_all()
                .build()
                .expect("stub runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind stub");
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                // Not a graceful shutdown: hung connections must not block drop.
                tokio::select! {
                    r = axum::serve(listener, app) => r.expect("stub server"),
                    _ = shutdown_rx => {}
                }
            });
            rt.shutdown_background();
        });
        let addr = addr_rx.recv().expect("stub did not start");
        Self {
            url: format!("http://{addr}"),
            state,
            shutdown: Some(shutdown_tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Prompts received so far, in arrival order (probe requests included).
    pub fn prompts(&self) -> Vec<String> {
        self.state.counters.prompts.lock().unwrap().clone()
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.counters.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn embed_calls(&self) -> usize {
        self.state.counters.embed_calls.load(Ordering::SeqCst)
    }
}

impl Drop for StubBackend {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({"error": msg}))).into_response()
}

async fn chat(State(state): State<Arc<StubState>>, Json(body): Json<Value>) -> Response {
    let Some(prompt) = body.pointer("/messages/0/content").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing messages[0].content");
    };
    let c = &state.counters;
    c.prompts.lock().unwrap().push(prompt.to_string());
    let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    c.max_in_flight.fetch_max(now, Ordering::SeqCst);
    if !state.cfg.chat_delay.is_zero() {
        tokio::time::sleep(state.cfg.chat_delay).await;
    }
    let reply = (state.cfg.chat)(prompt);
    if reply == StubReply::Hang {
        tokio::time::sleep(Duration::from_secs(3600)).await;
    }
    c.in_flight.fetch_sub(1, Ordering::SeqCst);
    match reply {
        StubReply::Text(text) => Json(json!({
            "object": "chat.completion",
            "model": body.get("model").cloned().unwrap_or(Value::Null),
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        }))
        .into_response(),
        StubReply::Status(code, msg) => {
            error(StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), &msg)
        }
        StubReply::Hang => unreachable!(),
    }
}

async fn embeddings(State(state): State<Arc<StubState>>, Json(body): Json<Value>) -> Response {
    state.counters.embed_calls.fetch_add(1, Ordering::SeqCst);
    let input = match body.get("input") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(a)) => a.first().and_then(Value::as_str).unwrap_or_default().to_string(),
        _ => return error(StatusCode::BAD_REQUEST, "missing input"),
    };
    if input.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty input");
    }
    let v = state.cfg.embedder.embed_sync(&input);
    Json(json!({"object": "list", "data": [{"index": 0, "embedding": v}]})).into_response()
}
