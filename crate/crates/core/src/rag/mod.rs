//! Embedding store over training emails with exact cosine retrieval.

mod store;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, Embedder};
use crate::ingest::{Email, Split};
use crate::prompts;

pub use store::{sidecar_path, StoredDoc, VectorStore};

#[derive(Debug, thiserror::Error)]
pub enum RagError {
    #[error("vector for {0} has zero norm")]
    ZeroNorm(String),
    #[error("embedding dimension mismatch: store has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("email {0} is already in the store")]
    DuplicateId(String),
    #[error("the store is empty")]
    EmptyStore,
    #[error("the corpus has no train-split emails to index")]
    EmptyTrainSplit,
    #[error("embedding backend: {0}")]
    Backend(#[from] BackendError),
    #[error("store i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt store file: {0}")]
    Format(String),
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, RagError> {
    if u.len() != v.len() {
        return Err(RagError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(RagError::ZeroNorm("cosine input".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum()
}

pub(crate) fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagHit {
    pub email_id: String,
    pub similarity: f64,
    pub body: String,
}

/// Hit ordering: similarity descending, then email id ascending.
pub fn hit_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl VectorStore {
    /// Exact top-`n_rag` scan by cosine, keeping hits with similarity
    /// `>= t_rag`. `exclude_id` is removed before ranking.
    pub fn retrieve_by_vector(
        &self,
        query: &[f32],
        n_rag: usize,
        t_rag: f64,
        exclude_id: Option<&str>,
    ) -> Result<Vec<RagHit>, RagError> {
        if self.is_empty() {
            return Err(RagError::EmptyStore);
        }
        if query.len() != self.dim() {
            return Err(RagError::DimensionMismatch {
                expected: self.dim(),
                found: query.len(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(RagError::ZeroNorm("query".into()));
        }
        let mut scored: Vec<(f64, &StoredDoc)> = self
            .docs()
            .iter()
            .filter(|d| Some(d.email_id.as_str()) != exclude_id)
            .map(|d| ((dot(query, &d.vector) / (qn * d.norm)).clamp(-1.0, 1.0), d))
            .collect();
        scored.sort_by(|a, b| hit_order((a.0, &a.1.email_id), (b.0, &b.1.email_id)));
        Ok(scored
            .into_iter()
            .take(n_rag)
            .filter(|(s, _)| *s >= t_rag)
            .map(|(similarity, d)| RagHit {
                email_id: d.email_id.clone(),
                similarity,
                body: d.body.clone(),
            })
            .collect())
    }

    /// Embeds `query` and retrieves against it.
    pub async fn retrieve<E: Embedder>(
        &self,
        embedder: &E,
        query: &str,
        n_rag: usize,
        t_rag: f64,
        exclude_id: Option<&str>,
    ) -> Result<Vec<RagHit>, RagError> {
        if self.is_empty() {
            return Err(RagError::EmptyStore);
        }
        let q = embedder.embed(query).await?;
        self.retrieve_by_vector(&q, n_rag, t_rag, exclude_id)
    }
}

/// Embeds the body of every train-split email. Test emails never enter.
pub async fn index<E: Embedder>(corpus: &[Email], embedder: &E) -> Result<VectorStore, RagError> {
    let mut store: Option<VectorStore> = None;
    for email in corpus.iter().filter(|e| e.split == Split::Train) {
        let v = embedder.embed(&email.body).await?;
        let s = store.get_or_insert_with(|| VectorStore::new(v.len()));
        s.insert(&email.id, &email.body, v)?;
    }
    store.ok_or(RagError::EmptyTrainSplit)
}

/// Renders hits as the RAG context block; no hits renders as "".
pub fn build_rag_preamble(hits: &[RagHit]) -> String {
    prompts::rag_block(hits.iter().map(|h| h.body.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap() - 8.0 / 9.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(RagError::ZeroNorm(_))));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(RagError::DimensionMismatch { .. })));
    }

    fn store() -> VectorStore {
        let mut s = VectorStore::new(2);
        s.insert("b", "B", vec![1.0, 0.0]).unwrap();
        s.insert("a", "A", vec![1.0, 0.0]).unwrap();
        s.insert("c", "C", vec![0.6, 0.8]).unwrap();
        s.insert("d", "D", vec![-1.0, 0.0]).unwrap();
        s
    }

    #[test]
    fn ties_break_by_id() {
        let hits = store().retrieve_by_vector(&[1.0, 0.0], 3, -1.0, None).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.email_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(hits[0].similarity, 1.0);
    }

    #[test]
    fn threshold_and_exclusion() {
        let s = store();
        assert!(s.retrieve_by_vector(&[0.6, 0.8], 4, 1.0 + 1e-9, None).unwrap().is_empty());
        let hits = s.retrieve_by_vector(&[1.0, 0.0], 1, 0.0, Some("a")).unwrap();
        assert_eq!(hits[0].email_id, "b");
        let hits = s.retrieve_by_vector(&[1.0, 0.0], 4, 0.7, None).unwrap();
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn query_guards() {
        let s = store();
        assert!(matches!(
            s.retrieve_by_vector(&[1.0, 0.0, 0.0], 1, 0.0, None),
            Err(RagError::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(matches!(s.retrieve_by_vector(&[0.0, 0.0], 1, 0.0, None), Err(RagError::ZeroNorm(_))));
        assert!(matches!(
            VectorStore::new(2).retrieve_by_vector(&[1.0, 0.0], 1, 0.0, None),
            Err(RagError::EmptyStore)
        ));
    }

    #[test]
    fn preamble_blocks() {
        assert_eq!(build_rag_preamble(&[]), "");
        let hit = |id: &str, body: &str| RagHit {
            email_id: id.into(),
            similarity: 0.5,
            body: body.into(),
        };
        let one = build_rag_preamble(&[hit("a", "Hi")]);
        assert_eq!(one.matches("EMAIL CONTENT:").count(), 1);
        assert!(one.ends_with("EMAIL CONTENT:\nHi\n\n---\n"));
        let two = build_rag_preamble(&[hit("a", "Hi"), hit("b", "Yo")]);
        assert_eq!(two.matches("EMAIL CONTENT:").count(), 2);
        assert!(two.contains("Hi\n\n---\n\nEMAIL CONTENT:\nYo\n\n---\n"));
    }
}
