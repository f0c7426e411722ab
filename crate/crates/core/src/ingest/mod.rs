//! Mail ingestion: archive parsing, cleaning/anonymization and train/test
//! splitting.
//!
//! The corpus JSONL written from [`Email`] (`id`, `subject`, `body`,
//! `sent_at`, `split`) is the contract consumed by every downstream stage.

mod clean;
mod mbox;
mod split;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use clean::{clean, clean_corpus, CleanReport, Cleaned, CleaningRules, CompiledRules, DropReason};
pub use mbox::{parse_archive, ArchiveFormat, ParsedArchive, SkippedMessage};
pub use split::{split_dataset, train_count};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

/// One cleaned message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Email {
    pub id: String,
    pub subject: String,
    pub body: String,
    pub sent_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed mbox framing at byte offset {offset}: {reason}")]
    Framing { offset: usize, reason: String },
    #[error("malformed csv at byte offset {offset}: {reason}")]
    Csv { offset: u64, reason: String },
    #[error("invalid substitution pattern {pattern:?}: {source}")]
    Pattern {
        pattern: String,
        #[source]
        source: regex::Error,
    },
    #[error("substitution pattern {pattern:?} still matches email {email_id} after cleaning")]
    AnonymizationLeak { pattern: String, email_id: String },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("corpus of {0} emails cannot be split into two non-empty parts")]
    CorpusTooSmall(usize),
    #[error("duplicate email id {0}")]
    DuplicateId(String),
}

/// Rejects corpora whose ids are not unique.
pub fn check_unique_ids(corpus: &[Email]) -> Result<(), IngestError> {
    let mut seen = std::collections::HashSet::with_capacity(corpus.len());
    for e in corpus {
        if !seen.insert(e.id.as_str()) {
            return Err(IngestError::DuplicateId(e.id.clone()));
        }
    }
    Ok(())
}

pub(crate) fn normalize_line_endings(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}
