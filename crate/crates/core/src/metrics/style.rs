use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mauve::{mauve, MauveParams};
use super::MetricsError;
use crate::backend::Embedder;

/// Cross-user MAUVE matrix. Row `i` is the model trained for `users[i]`,
/// column `j` compares its generations for `users[j]`'s instructions with
/// `users[j]`'s own emails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleMatrix {
    pub users: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    /// Minimum diagonal entry exceeds the maximum off-diagonal entry.
    pub diagonal_dominant: bool,
}

impl StyleMatrix {
    pub fn min_diagonal(&self) -> f64 {
        (0..self.users.len())
            .map(|i| self.scores[i][i])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.users.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.scores[i][j])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for u in &self.users {
            let _ = write!(out, ",{u}");
        }
        out.push('\n');
        for (u, row) in self.users.iter().zip(&self.scores) {
            out.push_str(u);
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

async fn embed_all<E: Embedder>(embedder: &E, texts: &[String]) -> Result<Vec<Vec<f32>>, MetricsError> {
    let mut out = Vec::with_capacity(texts.len());
    for t in texts {
        out.push(embedder.embed(t).await?);
    }
    Ok(out)
}

/// `generations[model][user]` holds texts the model trained for `model`
/// wrote for `user`'s test instructions; `references[user]` holds `user`'s
/// own emails.
pub async fn style_matrix<E: Embedder>(
    generations: &BTreeMap<String, BTreeMap<String, Vec<String>>>,
    references: &BTreeMap<String, Vec<String>>,
    embedder: &E,
    params: &MauveParams,
) -> Result<StyleMatrix, MetricsError> {
    let users: Vec<String> = references.keys().cloned().collect();
    if users.is_empty() {
        return Err(MetricsError::Empty("no users in references"));
    }
    if let Some(extra) = generations.keys().find(|m| !references.contains_key(*m)) {
        return Err(MetricsError::MissingUser(extra.clone(), "references"));
    }
    let mut reference_vecs = BTreeMap::new();
    for (user, texts) in references {
        reference_vecs.insert(user.as_str(), embed_all(embedder, texts).await?);
    }
    let mut scores = Vec::with_capacity(users.len());
    for model in &users {
        let per_user = generations
            .get(model)
            .ok_or_else(|| MetricsError::MissingUser(model.clone(), "generations"))?;
        let mut row = Vec::with_capacity(users.len());
        for user in &users {
            let texts = per_user
                .get(user)
                .ok_or_else(|| MetricsError::MissingUser(user.clone(), "generations"))?;
            let q = embed_all(embedder, texts).await?;
            row.push(mauve(&reference_vecs[user.as_str()], &q, params)?.score);
        }
        scores.push(row);
    }
    let mut m = StyleMatrix {
        users,
        scores,
        diagonal_dominant: false,
    };
    m.diagonal_dominant = m.users.len() == 1 || m.min_diagonal() > m.max_off_diagonal();
    Ok(m)
}
