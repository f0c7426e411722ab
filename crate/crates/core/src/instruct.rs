//! Reverse instructions: ask a pretrained model to summarize each training
//! email as the instruction that would produce it.

use std::collections::HashMap;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::backend::{BackendClient, BackendError, GenerationParams};
use crate::ingest::{Email, Split};
use crate::metrics::{evaluate_texts, EmailScore};
use crate::prompts::{self, INSTRUCTION_MARKER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub email_id: String,
    pub instruction: String,
    pub email_body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub email_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairsOutcome {
    pub pairs: Vec<InstructionPair>,
    pub failures: Vec<PairFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum InstructError {
    #[error("summarization backend unreachable: {0}")]
    Unreachable(#[source] BackendError),
    #[error("email {0} has no split assigned")]
    NotSplit(String),
    #[error("golden and generated instructions share no email ids")]
    NoSharedIds,
}

pub fn build_summarization_prompt(email_body: &str) -> String {
    prompts::summarization_prompt(email_body)
}

/// Everything after the first `Instruction:` marker, trimmed; the whole
/// trimmed response when the marker is absent. `None` if that is empty.
pub fn extract_instruction(response: &str) -> Option<String> {
    let tail = match response.find(INSTRUCTION_MARKER) {
        Some(i) => &response[i + INSTRUCTION_MARKER.len()..],
        None => response,
    };
    let tail = tail.trim();
    (!tail.is_empty()).then(|| tail.to_string())
}

/// Summarizes one email. Failures are returned as the reason string that
/// goes into the failure report.
pub async fn generate_instruction(
    client: &BackendClient,
    email: &Email,
    params: &GenerationParams,
) -> Result<String, String> {
    let response = client
        .chat(&build_summarization_prompt(&email.body), params)
        .await
        .map_err(|e| e.to_string())?;
    let instruction = extract_instruction(&response).ok_or_else(|| BackendError::Empty.to_string())?;
    if instruction.contains(email.body.as_str()) {
        return Err("degenerate summary: instruction contains the email body verbatim".into());
    }
    Ok(instruction)
}

/// Builds one pair per train-split email with at most `max_parallel`
/// requests in flight. Output order follows input order.
pub async fn build_pairs(
    client: &BackendClient,
    corpus: &[Email],
    params: &GenerationParams,
) -> Result<PairsOutcome, InstructError> {
    build_pairs_for_split(client, corpus, Split::Train, params).await
}

/// [`build_pairs`] over another split. Summarizing the test split yields
/// the instructions used as evaluation prompts.
pub async fn build_pairs_for_split(
    client: &BackendClient,
    corpus: &[Email],
    split: Split,
    params: &GenerationParams,
) -> Result<PairsOutcome, InstructError> {
    if let Some(e) = corpus.iter().find(|e| e.split == Split::Unassigned) {
        return Err(InstructError::NotSplit(e.id.clone()));
    }
    let train: Vec<&Email> = corpus.iter().filter(|e| e.split == split).collect();
    if train.is_empty() {
        return Ok(PairsOutcome::default());
    }
    client.probe().await.map_err(InstructError::Unreachable)?;

    let width = client.config().max_parallel.max(1);
    let results: Vec<_> = stream::iter(train.iter().map(|&email| async move {
        (email, generate_instruction(client, email, params).await)
    }))
    .buffered(width)
    .collect()
    .await;

    let mut out = PairsOutcome::default();
    for (email, result) in results {
        match result {
            Ok(instruction) => out.pairs.push(InstructionPair {
                email_id: email.id.clone(),
                instruction,
                email_body: email.body.clone(),
            }),
            Err(reason) => {
                warn!(email_id = %email.id, %reason, "summarization failed");
                out.failures.push(PairFailure {
                    email_id: email.id.clone(),
                    reason,
                });
            }
        }
    }
    info!(pairs = out.pairs.len(), failures = out.failures.len(), "reverse instructions built");
    Ok(out)
}

/// Golden (user-written) instruction for an email.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenInstruction {
    pub email_id: String,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub per_pair: Vec<EmailScore>,
    pub mean_bleu: f64,
    pub mean_rouge: f64,
}

/// Scores generated instructions (candidates) against golden ones
/// (references) over the ids both sides share, in golden order.
pub fn evaluate_summaries(
    golden: &[GoldenInstruction],
    generated: &[InstructionPair],
) -> Result<SummaryReport, InstructError> {
    let generated: HashMap<&str, &InstructionPair> =
        generated.iter().map(|p| (p.email_id.as_str(), p)).collect();
    let per_pair: Vec<EmailScore> = golden
        .iter()
        .filter_map(|g| {
            generated
                .get(g.email_id.as_str())
                .map(|p| evaluate_texts(&g.email_id, &p.instruction, &g.instruction))
        })
        .collect();
    if per_pair.is_empty() {
        return Err(InstructError::NoSharedIds);
    }
    let n = per_pair.len() as f64;
    Ok(SummaryReport {
        mean_bleu: per_pair.iter().map(|s| s.bleu).sum::<f64>() / n,
        mean_rouge: per_pair.iter().map(|s| s.rouge_l_f1).sum::<f64>() / n,
        per_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_extraction() {
        assert_eq!(
            extract_instruction("Instruction: Write to Cheryl saying the proposal looks good.").unwrap(),
            "Write to Cheryl saying the proposal looks good."
        );
        assert_eq!(
            extract_instruction("Sure!\nInstruction:\n  Ask Ernie.\nInstruction: again").unwrap(),
            "Ask Ernie.\nInstruction: again"
        );
        assert_eq!(extract_instruction("  no marker here \n").unwrap(), "no marker here");
        assert_eq!(extract_instruction("instruction: lower").unwrap(), "instruction: lower");
        assert!(extract_instruction("").is_none());
        assert!(extract_instruction("Instruction:   ").is_none());
    }

    fn golden(id: &str, s: &str) -> GoldenInstruction {
        GoldenInstruction {
            email_id: id.into(),
            instruction: s.into(),
        }
    }

    fn pair(id: &str, s: &str) -> InstructionPair {
        InstructionPair {
            email_id: id.into(),
            instruction: s.into(),
            email_body: "body".into(),
        }
    }

    #[test]
    fn identical_summaries_score_one() {
        let g = [golden("a", "Write to Cheryl saying that the proposal looks good")];
        let r = evaluate_summaries(&g, &[pair("a", "Write to Cheryl saying that the proposal looks good")]).unwrap();
        assert_eq!((r.mean_bleu, r.mean_rouge), (1.0, 1.0));
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        let g = [golden("a", "one two three four five")];
        let r = evaluate_summaries(&g, &[pair("a", "six seven eight nine ten")]).unwrap();
        assert_eq!(r.mean_bleu, 0.0);
    }

    #[test]
    fn no_shared_ids_is_an_error() {
        let g = [golden("a", "x y z w")];
        assert!(matches!(
            evaluate_summaries(&g, &[pair("b", "x y z w")]),
            Err(InstructError::NoSharedIds)
        ));
    }
}
