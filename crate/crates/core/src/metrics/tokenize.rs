use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

/// Lowercased word tokens with all Unicode punctuation removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wraps already-canonical tokens. Used by tests and oracles; scoring
    /// code should go through [`tokenize`].
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self(tokens.into_iter().map(Into::into).collect())
    }
}

/// True for the seven punctuation categories Pc, Pd, Ps, Pe, Pi, Pf and Po.
pub fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Deletes punctuation characters (no space is inserted), splits on Unicode
/// whitespace and lowercases each token.
pub fn tokenize(text: &str) -> TokenSeq {
    let stripped: String = text.chars().filter(|c| !is_punctuation(*c)).collect();
    TokenSeq(stripped.split_whitespace().map(str::to_lowercase).collect())
}
