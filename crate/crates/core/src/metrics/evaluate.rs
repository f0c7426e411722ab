use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mauve::{mauve, DivergenceCurve, MauveParams};
use super::{bleu, rouge_l_f1, tokenize, MetricsError};
use crate::backend::Embedder;
use crate::ingest::Email;

/// Average BLEU above which generations were judged plausible.
pub const PLAUSIBLE_BLEU: f64 = 0.2;
/// MAUVE above which generations were judged plausible.
pub const PLAUSIBLE_MAUVE: f64 = 0.75;

/// Whether aggregate scores fall in the plausible band.
///
/// ```
/// use panza_core::metrics::is_plausible;
/// assert!(is_plausible(0.25, 0.8));
/// assert!(!is_plausible(0.2, 0.9));
/// assert!(!is_plausible(0.3, 0.75));
/// ```
pub fn is_plausible(mean_bleu: f64, mauve: f64) -> bool {
    mean_bleu > PLAUSIBLE_BLEU && mauve > PLAUSIBLE_MAUVE
}

/// A generated email to be scored against the reference with the same id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub email_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailScore {
    pub email_id: String,
    pub bleu: f64,
    pub rouge_l_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_email: Vec<EmailScore>,
    pub mean_bleu: f64,
    pub mean_rouge: f64,
    pub mauve: f64,
    pub curve: DivergenceCurve,
    pub mauve_k: usize,
    pub mauve_params: MauveParams,
    pub plausible: bool,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

/// Per-pair BLEU and ROUGE-L F1 of `candidate` against `reference` text.
pub fn evaluate_texts(email_id: &str, candidate: &str, reference: &str) -> EmailScore {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    EmailScore {
        email_id: email_id.to_string(),
        bleu: bleu(&c, &r),
        rouge_l_f1: rouge_l_f1(&c, &r),
    }
}

/// Scores candidates against their reference emails and computes corpus
/// MAUVE of all candidate embeddings against all reference embeddings.
pub async fn evaluate<E: Embedder>(
    candidates: &[Candidate],
    references: &[Email],
    embedder: &E,
    params: &MauveParams,
) -> Result<MetricReport, MetricsError> {
    if candidates.is_empty() {
        return Err(MetricsError::Empty("no candidates to evaluate"));
    }
    let by_id: HashMap<&str, &Email> = references.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut per_email = Vec::with_capacity(candidates.len());
    for c in candidates {
        let reference = by_id
            .get(c.email_id.as_str())
            .ok_or_else(|| MetricsError::UnknownCandidate(c.email_id.clone()))?;
        per_email.push(evaluate_texts(&c.email_id, &c.text, &reference.body));
    }

    let mut q_vecs = Vec::with_capacity(candidates.len());
    for c in candidates {
        q_vecs.push(embedder.embed(&c.text).await?);
    }
    let mut p_vecs = Vec::with_capacity(references.len());
    for r in references {
        p_vecs.push(embedder.embed(&r.body).await?);
    }
    let result = mauve(&p_vecs, &q_vecs, params)?;

    let mean_bleu = mean(per_email.iter().map(|s| s.bleu));
    let mean_rouge = mean(per_email.iter().map(|s| s.rouge_l_f1));
    Ok(MetricReport {
        mean_bleu,
        mean_rouge,
        mauve: result.score,
        plausible: is_plausible(mean_bleu, result.score),
        curve: result.curve,
        mauve_k: result.k,
        mauve_params: *params,
        per_email,
    })
}
