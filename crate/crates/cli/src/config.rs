use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use panza_core::backend::{GenerationParams, LlmEndpointConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BackendArgs, GenerationArgs};
use crate::CliError;

pub const DEFAULT_CONFIG: &str = "panza.toml";

/// Contents of `panza.toml`. Command-line flags override every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanzaConfig {
    pub backend: LlmEndpointConfig,
    pub generation: GenerationParams,
    pub serve: ServeSection,
}

/// Gateway settings; backend and sampling come from the top-level tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub listen_address: Option<SocketAddr>,
    pub user_preamble_path: Option<PathBuf>,
    pub system_preamble_path: Option<PathBuf>,
    pub rag_store_path: Option<PathBuf>,
    pub n_rag: Option<usize>,
    pub t_rag: Option<f64>,
    pub cors_origin: Option<String>,
}

impl PanzaConfig {
    /// `explicit` must exist; otherwise `./panza.toml` is used if present.
    pub fn discover(explicit: Option<&Path>) -> Result<Self, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(DEFAULT_CONFIG);
                if !p.exists() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn backend_with(&self, a: &BackendArgs) -> Result<LlmEndpointConfig, CliError> {
        let mut b = self.backend.clone();
        if let Some(v) = &a.backend_url {
            b.base_url = v.clone();
        }
        if let Some(v) = &a.model {
            b.model_name = v.clone();
        }
        if let Some(v) = &a.embedding_model {
            b.embedding_model = Some(v.clone());
        }
        if let Some(v) = a.max_parallel {
            b.max_parallel = v;
        }
        if let Some(v) = a.timeout_ms {
            b.timeout_ms = v;
        }
        if let Some(v) = a.retry_limit {
            b.retry_limit = v;
        }
        b.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(b)
    }

    pub fn generation_with(&self, a: &GenerationArgs) -> Result<GenerationParams, CliError> {
        let mut g = self.generation;
        if let Some(v) = a.temperature {
            g.temperature = v;
        }
        if let Some(v) = a.top_p {
            g.top_p = v;
        }
        if let Some(v) = a.top_k {
            g.top_k = v;
        }
        if let Some(v) = a.max_tokens {
            g.max_tokens = v;
        }
        g.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(g)
    }
}
