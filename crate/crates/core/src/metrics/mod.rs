//! Evaluation metrics: BLEU, ROUGE-L F1, MAUVE and the cross-user style
//! matrix.

mod evaluate;
pub mod kmeans;
pub mod mauve;
mod overlap;
mod style;
mod tokenize;

use crate::backend::BackendError;

pub use evaluate::{
    evaluate, evaluate_texts, is_plausible, Candidate, EmailScore, MetricReport, PLAUSIBLE_BLEU,
    PLAUSIBLE_MAUVE,
};
pub use mauve::{default_k, kl_divergence, mauve, DivergenceCurve, MauveParams, MauveResult};
pub use overlap::{bleu, clipped_matches, lcs_len, rouge_l_f1};
pub use style::{style_matrix, StyleMatrix};
pub use tokenize::{is_punctuation, tokenize, TokenSeq};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{side} side has {have} samples but k = {k}; pass a smaller k")]
    TooFewSamples { side: &'static str, have: usize, k: usize },
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0}")]
    Empty(&'static str),
    #[error("invalid mauve parameters: {0}")]
    InvalidParams(String),
    #[error("candidate {0} has no reference email")]
    UnknownCandidate(String),
    #[error("user {0:?} is missing from {1}")]
    MissingUser(String, &'static str),
    #[error("embedding failed: {0}")]
    Embedding(#[from] BackendError),
}
