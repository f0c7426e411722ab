//! HTTP gateway: turns a writing instruction into a full prompt (preambles
//! plus optional retrieved emails) and returns the backend's email.
//!
//! `POST /api/generate` takes `{instruction, use_rag?}` and returns
//! `{email, rag_ids, latency_ms}`. `GET /api/health` always answers 200 with
//! `{status, store_size, backend_ok}`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tracing::{error, info, warn};

use crate::backend::{BackendClient, BackendError, GenerationParams, LlmEndpointConfig};
use crate::prompts::SYSTEM_PREAMBLE;
use crate::raft::{assemble_prompt, PromptAssembly, INFERENCE_N_RAG, DEFAULT_T_RAG};
use crate::rag::{build_rag_preamble, RagError, VectorStore};

pub const ENV_BACKEND_URL: &str = "PANZA_BACKEND_URL";
pub const ENV_LISTEN_ADDR: &str = "PANZA_LISTEN_ADDR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub backend: LlmEndpointConfig,
    pub user_preamble_path: PathBuf,
    /// Overrides the built-in system preamble when set.
    pub system_preamble_path: Option<PathBuf>,
    pub rag_store_path: Option<PathBuf>,
    pub n_rag: usize,
    pub t_rag: f64,
    pub generation: GenerationParams,
    pub listen_address: SocketAddr,
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: LlmEndpointConfig::default(),
            user_preamble_path: PathBuf::from("user_preamble.txt"),
            system_preamble_path: None,
            rag_store_path: None,
            n_rag: INFERENCE_N_RAG,
            t_rag: DEFAULT_T_RAG,
            generation: GenerationParams::default(),
            listen_address: SocketAddr::from(([127, 0, 0, 1], 5001)),
            cors_origin: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("backend timed out")]
    BackendTimeout,
    #[error("backend returned HTTP {status}")]
    BackendStatus { status: u16, body: String },
    #[error("backend failure: {0}")]
    Backend(BackendError),
    #[error("retrieval failure: {0}")]
    Retrieval(RagError),
    #[error("configuration: {0}")]
    Config(String),
}

impl From<BackendError> for GatewayError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Timeout => GatewayError::BackendTimeout,
            BackendError::Status { status, body } => GatewayError::BackendStatus { status, body },
            other => GatewayError::Backend(other),
        }
    }
}

impl From<RagError> for GatewayError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Backend(b) => b.into(),
            other => GatewayError::Retrieval(other),
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            GatewayError::EmptyInstruction => (StatusCode::BAD_REQUEST, "empty_instruction"),
            GatewayError::BackendTimeout => (StatusCode::GATEWAY_TIMEOUT, "backend_timeout"),
            GatewayError::BackendStatus { .. } => (StatusCode::BAD_GATEWAY, "backend_error"),
            GatewayError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend_unavailable"),
            GatewayError::Retrieval(_) => (StatusCode::INTERNAL_SERVER_ERROR, "retrieval_error"),
            GatewayError::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "configuration_error"),
        };
        let mut body = json!({"error": code, "message": self.to_string()});
        if let GatewayError::BackendStatus { status, .. } = &self {
            body["backend_status"] = json!(status);
        }
        (status, Json(body)).into_response()
    }
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `PANZA_BACKEND_URL` and `PANZA_LISTEN_ADDR` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), GatewayError> {
        if let Some(url) = lookup(ENV_BACKEND_URL) {
            self.backend.base_url = url;
        }
        if let Some(addr) = lookup(ENV_LISTEN_ADDR) {
            self.listen_address = addr
                .parse()
                .map_err(|e| GatewayError::Config(format!("{ENV_LISTEN_ADDR}={addr:?}: {e}")))?;
        }
        Ok(())
    }
}

/// Reads a preamble file, dropping trailing line breaks.
pub fn read_preamble(path: &Path) -> std::io::Result<String> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.trim_end_matches(['\n', '\r']).to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub instruction: String,
    #[serde(default)]
    pub use_rag: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub email: String,
    pub rag_ids: Vec<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub store_size: usize,
    pub backend_ok: bool,
}

/// Immutable per-persona serving state shared by all requests.
pub struct Gateway {
    client: BackendClient,
    system_preamble: String,
    user_preamble: String,
    store: Option<VectorStore>,
    n_rag: usize,
    t_rag: f64,
    generation: GenerationParams,
}

impl Gateway {
    pub fn new(
        client: BackendClient,
        system_preamble: String,
        user_preamble: String,
        store: Option<VectorStore>,
        n_rag: usize,
        t_rag: f64,
        generation: GenerationParams,
    ) -> Result<Self, GatewayError> {
        generation.validate().map_err(|e| GatewayError::Config(e.to_string()))?;
        if n_rag == 0 {
            return Err(GatewayError::Config("n_rag must be positive".into()));
        }
        Ok(Self {
            client,
            system_preamble,
            user_preamble,
            store,
            n_rag,
            t_rag,
            generation,
        })
    }

    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        let client = BackendClient::new(cfg.backend.clone()).map_err(|e| GatewayError::Config(e.to_string()))?;
        let user = read_preamble(&cfg.user_preamble_path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", cfg.user_preamble_path.display())))?;
        let system = match &cfg.system_preamble_path {
            Some(p) => read_preamble(p).map_err(|e| GatewayError::Config(format!("{}: {e}", p.display())))?,
            None => SYSTEM_PREAMBLE.to_string(),
        };
        let store = match &cfg.rag_store_path {
            Some(p) => Some(VectorStore::load(p).map_err(|e| GatewayError::Config(e.to_string()))?),
            None => None,
        };
        Self::new(client, system, user, store, cfg.n_rag, cfg.t_rag, cfg.generation)
    }

    pub fn store_size(&self) -> usize {
        self.store.as_ref().map_or(0, VectorStore::len)
    }

    /// The prompt that would be sent for `instruction` with the given hits'
    /// RAG block (if any).
    pub fn prompt_for(&self, instruction: &str, rag_block: Option<String>) -> String {
        assemble_prompt(&PromptAssembly {
            system_preamble: self.system_preamble.clone(),
            user_preamble: self.user_preamble.clone(),
            rag_block,
            instruction: instruction.to_string(),
        })
    }

    pub async fn handle_generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, GatewayError> {
        let started = Instant::now();
        if req.instruction.trim().is_empty() {
            return Err(GatewayError::EmptyInstruction);
        }
        let mut rag_ids = Vec::new();
        let mut rag_block = None;
        if let Some(store) = self.store.as_ref().filter(|_| req.use_rag.unwrap_or(true)) {
            let hits = store
                .retrieve(&self.client, &req.instruction, self.n_rag, self.t_rag, None)
                .await?;
            if !hits.is_empty() {
                rag_ids = hits.iter().map(|h| h.email_id.clone()).collect();
                rag_block = Some(build_rag_preamble(&hits));
            }
        }
        let prompt = self.prompt_for(&req.instruction, rag_block);
        let email = match self.client.chat_once(&prompt, &self.generation).await {
            Ok(text) => text,
            Err(BackendError::Status { status, body }) => {
                error!(status, body = %body, "backend returned an error");
                return Err(GatewayError::BackendStatus { status, body });
            }
            Err(e) => {
                warn!(error = %e, "backend call failed");
                return Err(e.into());
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        info!(latency_ms, rag = rag_ids.len(), "email generated");
        Ok(GenerateResponse {
            email,
            rag_ids,
            latency_ms,
        })
    }

    pub async fn handle_health(&self) -> HealthResponse {
        let backend_ok = self.client.probe().await.is_ok();
        HealthResponse {
            status: if backend_ok { "ok" } else { "degraded" }.to_string(),
            store_size: self.store_size(),
            backend_ok,
        }
    }
}

async fn generate(
    State(gw): State<Arc<Gateway>>,
    Json(req): Json<GenerateRequest>,
) -> Result<Json<GenerateResponse>, GatewayError> {
    gw.handle_generate(&req).await.map(Json)
}

async fn health(State(gw): State<Arc<Gateway>>) -> Json<HealthResponse> {
    Json(gw.handle_health().await)
}

pub fn router(gateway: Arc<Gateway>, cors_origin: Option<&str>) -> Result<Router, GatewayError> {
    let origin = match cors_origin {
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|e| GatewayError::Config(format!("cors origin {o:?}: {e}")))?,
        ),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Ok(Router::new()
        .route("/api/generate", post(generate))
        .route("/api/health", get(health))
        .layer(cors)
        .with_state(gateway))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    cfg: &GatewayConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    let gateway = Arc::new(Gateway::from_config(cfg)?);
    let app = router(gateway.clone(), cfg.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(cfg.listen_address)
        .await
        .map_err(|e| GatewayError::Config(format!("bind {}: {e}", cfg.listen_address)))?;
    info!(addr = %cfg.listen_address, store_size = gateway.store_size(), "gateway listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| GatewayError::Config(e.to_string()))
}
