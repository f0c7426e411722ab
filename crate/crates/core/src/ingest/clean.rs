use std::collections::HashSet;
use std::sync::LazyLock;

use regex::{NoExpand, Regex};
use serde::{Deserialize, Serialize};

use super::{Email, IngestError};

/// Cleaning configuration as loaded from a rules file.
///
/// `substitutions` are `(regex, replacement)` pairs; replacements are
/// literal text (no `$1` expansion).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    pub strip_quoted_replies: bool,
    pub strip_signatures: bool,
    pub substitutions: Vec<(String, String)>,
    pub min_body_tokens: usize,
}

impl CleaningRules {
    pub fn compile(&self) -> Result<CompiledRules, IngestError> {
        let substitutions = self
            .substitutions
            .iter()
            .map(|(pattern, replacement)| {
                Regex::new(pattern)
                    .map(|re| (re, replacement.clone()))
                    .map_err(|source| IngestError::Pattern {
                        pattern: pattern.clone(),
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(CompiledRules {
            strip_quoted_replies: self.strip_quoted_replies,
            strip_signatures: self.strip_signatures,
            substitutions,
            min_body_tokens: self.min_body_tokens,
        })
    }
}

/// Rules with every substitution pattern validated and compiled.
#[derive(Debug, Clone)]
pub struct CompiledRules {
    strip_quoted_replies: bool,
    strip_signatures: bool,
    substitutions: Vec<(Regex, String)>,
    min_body_tokens: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Empty,
    TooShort,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cleaned {
    Kept(Email),
    Dropped(DropReason),
}

static REPLY_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*On\s.*\swrote:\s*$").unwrap());

fn strip_quoted(body: &str) -> Option<String> {
    let kept: Vec<&str> = body
        .split('\n')
        .filter(|line| !line.trim_start().starts_with('>') && !REPLY_HEADER.is_match(line))
        .collect();
    let changed = kept.len() != body.split('\n').count();
    changed.then(|| kept.join("\n"))
}

fn strip_signature(body: &str) -> Option<String> {
    let lines: Vec<&str> = body.split('\n').collect();
    let delimiter = lines.iter().rposition(|l| l.trim_end() == "--")?;
    Some(lines[..delimiter].join("\n"))
}

/// Applies the cleaning heuristics and substitutions to one email.
///
/// Returns an error only when a substitution pattern still matches the
/// cleaned body, which means the rules cannot anonymize this corpus.
pub fn clean(mut email: Email, rules: &CompiledRules) -> Result<Cleaned, IngestError> {
    let mut body = email.body;
    let mut stripped = false;
    if rules.strip_quoted_replies {
        if let Some(b) = strip_quoted(&body) {
            body = b;
            stripped = true;
        }
    }
    if rules.strip_signatures {
        if let Some(b) = strip_signature(&body) {
            body = b;
            stripped = true;
        }
    }
    if stripped {
        body.truncate(body.trim_end().len());
    }
    for (re, replacement) in &rules.substitutions {
        if let std::borrow::Cow::Owned(b) = re.replace_all(&body, NoExpand(replacement)) {
            body = b;
        }
    }
    for (re, _) in &rules.substitutions {
        if re.is_match(&body) {
            return Err(IngestError::AnonymizationLeak {
                pattern: re.as_str().to_string(),
                email_id: email.id,
            });
        }
    }
    if body.trim().is_empty() {
        return Ok(Cleaned::Dropped(DropReason::Empty));
    }
    if body.split_whitespace().count() < rules.min_body_tokens {
        return Ok(Cleaned::Dropped(DropReason::TooShort));
    }
    email.body = body;
    Ok(Cleaned::Kept(email))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub kept: usize,
    pub dropped_empty: usize,
    pub dropped_short: usize,
    pub dropped_duplicate: usize,
}

/// Cleans every email and removes exact duplicate bodies, keeping the first.
pub fn clean_corpus(
    corpus: Vec<Email>,
    rules: &CompiledRules,
) -> Result<(Vec<Email>, CleanReport), IngestError> {
    let mut report = CleanReport {
        input: corpus.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(corpus.len());
    for email in corpus {
        match clean(email, rules)? {
            Cleaned::Kept(e) => {
                if seen.insert(e.body.clone()) {
                    kept.push(e);
                } else {
                    report.dropped_duplicate += 1;
                }
            }
            Cleaned::Dropped(DropReason::Empty) => report.dropped_empty += 1,
            Cleaned::Dropped(DropReason::TooShort) => report.dropped_short += 1,
            Cleaned::Dropped(DropReason::Duplicate) => report.dropped_duplicate += 1,
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Split;

    fn email(body: &str) -> Email {
        Email {
            id: "m".into(),
            subject: String::new(),
            body: body.into(),
            sent_at: None,
            split: Split::Unassigned,
        }
    }

    fn body_of(c: Cleaned) -> String {
        match c {
            Cleaned::Kept(e) => e.body,
            Cleaned::Dropped(r) => panic!("dropped: {r:?}"),
        }
    }

    #[test]
    fn signature_block_removed() {
        let rules = CleaningRules {
            strip_signatures: true,
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert_eq!(body_of(clean(email("Hi.\n-- \nBob"), &rules).unwrap()), "Hi.");
    }

    #[test]
    fn identity_when_everything_disabled() {
        let rules = CleaningRules::default().compile().unwrap();
        let body = "Hi.\n-- \nBob\n> quoted\n  ";
        assert_eq!(body_of(clean(email(body), &rules).unwrap()), body);
    }

    #[test]
    fn corporation_name_substituted() {
        let rules = CleaningRules {
            substitutions: vec![("Enron".into(), "Acme".into())],
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert_eq!(body_of(clean(email("Enron Corp"), &rules).unwrap()), "Acme Corp");
    }

    #[test]
    fn substitutions_apply_in_order_and_globally() {
        let rules = CleaningRules {
            substitutions: vec![("Ken".into(), "Sam".into()), ("Sam Lay".into(), "S. L.".into())],
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert_eq!(
            body_of(clean(email("Ken Lay met Ken."), &rules).unwrap()),
            "S. L. met Sam."
        );
    }

    #[test]
    fn replacement_is_literal() {
        let rules = CleaningRules {
            substitutions: vec![("(a)".into(), "$1x".into())],
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert_eq!(body_of(clean(email("bab"), &rules).unwrap()), "b$1xb");
    }

    #[test]
    fn quoted_reply_removed() {
        let rules = CleaningRules {
            strip_quoted_replies: true,
            ..Default::default()
        }
        .compile()
        .unwrap();
        let body = "Sounds good.\n\nOn Mon, Jan 1, 2001 at 10:00, Jeff wrote:\n> Can we meet?\n>> older\n";
        assert_eq!(body_of(clean(email(body), &rules).unwrap()), "Sounds good.");
    }

    #[test]
    fn invalid_pattern_rejected_at_load() {
        let err = CleaningRules {
            substitutions: vec![("(unclosed".into(), "x".into())],
            ..Default::default()
        }
        .compile()
        .unwrap_err();
        assert!(matches!(err, IngestError::Pattern { .. }));
    }

    #[test]
    fn short_and_empty_bodies_dropped() {
        let rules = CleaningRules {
            strip_signatures: true,
            min_body_tokens: 3,
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert_eq!(
            clean(email("two words"), &rules).unwrap(),
            Cleaned::Dropped(DropReason::TooShort)
        );
        assert_eq!(
            clean(email("--\nonly a signature"), &rules).unwrap(),
            Cleaned::Dropped(DropReason::Empty)
        );
        let off = CleaningRules::default().compile().unwrap();
        assert_eq!(clean(email(" \n "), &off).unwrap(), Cleaned::Dropped(DropReason::Empty));
    }

    #[test]
    fn self_reintroducing_substitution_is_reported() {
        let rules = CleaningRules {
            substitutions: vec![("Acme".into(), "Acme Inc".into())],
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert!(matches!(
            clean(email("Acme"), &rules),
            Err(IngestError::AnonymizationLeak { .. })
        ));
    }

    #[test]
    fn duplicates_removed_from_corpus() {
        let rules = CleaningRules::default().compile().unwrap();
        let mut corpus = vec![email("same"), email("same"), email("other"), email("")];
        for (i, e) in corpus.iter_mut().enumerate() {
            e.id = format!("m{i}");
        }
        let (kept, report) = clean_corpus(corpus, &rules).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(report.dropped_duplicate, 1);
        assert_eq!(report.dropped_empty, 1);
        assert_eq!(report.input, report.kept + report.dropped_duplicate + report.dropped_empty);
    }
}
