//! Personal email-style pipeline: ingest an archive, synthesize reverse
//! instructions, build a retrieval store, emit retrieval-augmented training
//! data, serve generations and evaluate them.

pub mod backend;
pub mod gateway;
pub mod ingest;
pub mod instruct;
pub mod jsonl;
pub mod manifest;
pub mod metrics;
pub mod prompts;
pub mod raft;
pub mod rag;
pub mod stub;

pub use backend::{BackendClient, BackendError, Embedder, GenerationParams, LlmEndpointConfig};
pub use ingest::{Email, Split};
pub use instruct::{InstructionPair, PairFailure};
pub use metrics::{MauveParams, MetricReport, StyleMatrix, TokenSeq};
pub use raft::{PromptAssembly, RaftParams, TrainerConfig, TrainingExample, TrainingMethod};
pub use rag::{RagHit, VectorStore};
