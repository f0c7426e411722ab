//! MAUVE: area under the divergence frontier between two sets of embeddings.
//!
//! Both sets are quantized together with k-means, each becomes a smoothed
//! histogram over clusters (P and Q), and for mixtures
//! `R = lambda * P + (1 - lambda) * Q` the frontier point is
//! `(exp(-c * KL(Q || R)), exp(-c * KL(P || R)))`. The score is the area
//! under the monotone envelope of those points, closed with `(0, 1)` and
//! `(1, 0)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansConfig};
use super::MetricsError;

pub const DEFAULT_SCALE: f64 = 5.0;
pub const DEFAULT_GRID_SIZE: usize = 25;
pub const SMOOTHING_EPSILON: f64 = 1e-9;
pub const MAX_CLUSTERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MauveParams {
    /// Cluster count; `None` selects [`default_k`].
    pub k: Option<usize>,
    pub scale: f64,
    pub grid_size: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for MauveParams {
    fn default() -> Self {
        Self {
            k: None,
            scale: DEFAULT_SCALE,
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
            epsilon: SMOOTHING_EPSILON,
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

impl MauveParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }
}

/// `max(2, floor((n_p + n_q) / 10))`, capped at 500.
pub fn default_k(n_p: usize, n_q: usize) -> usize {
    ((n_p + n_q) / 10).clamp(2, MAX_CLUSTERS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCurve {
    /// Frontier points in lambda-grid order, before augmentation.
    pub points: Vec<(f64, f64)>,
    pub scale: f64,
    pub lambda_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MauveResult {
    pub score: f64,
    pub curve: DivergenceCurve,
    pub k: usize,
    pub p_histogram: Vec<f64>,
    pub q_histogram: Vec<f64>,
}

/// `KL(p || q)` in nats. Terms with `p_i = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| if pi == qi { 0.0 } else { pi * (pi / qi).ln() })
        .sum()
}

/// `grid_size` evenly spaced weights strictly inside (0, 1).
pub fn lambda_grid(grid_size: usize) -> Vec<f64> {
    (1..=grid_size)
        .map(|i| i as f64 / (grid_size + 1) as f64)
        .collect()
}

fn histogram(labels: impl Iterator<Item = usize>, k: usize, epsilon: f64) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    let mut n = 0.0;
    for l in labels {
        counts[l] += 1.0;
        n += 1.0;
    }
    let smoothed: Vec<f64> = counts.iter().map(|c| c / n + epsilon).collect();
    let total: f64 = smoothed.iter().sum();
    smoothed.into_iter().map(|v| v / total).collect()
}

/// Frontier points for histograms `p` and `q`.
///
/// The mixture is formed as `q + lambda * (p - q)`, which is exactly `p`
/// wherever `p` and `q` agree, so identical histograms give KL of exactly 0.
pub fn divergence_curve(p: &[f64], q: &[f64], scale: f64, grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&lambda| {
            let r: Vec<f64> = p.iter().zip(q).map(|(pi, qi)| qi + lambda * (pi - qi)).collect();
            let x = (-scale * kl_divergence(q, &r)).exp();
            let y = (-scale * kl_divergence(p, &r)).exp();
            (x, y)
        })
        .collect()
}

/// Area under the non-increasing upper envelope of `points` augmented with
/// `(0, 1)` and `(1, 0)`, by the trapezoid rule.
pub fn frontier_area(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 1.0));
    pts.extend_from_slice(points);
    pts.push((1.0, 0.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    // Sweep from the right: envelope(x) = max y over points with x' >= x.
    let mut running = f64::NEG_INFINITY;
    for p in pts.iter_mut().rev() {
        running = running.max(p.1);
        p.1 = running;
    }
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    area.clamp(0.0, 1.0)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Computes MAUVE between samples `p_vecs` (reference) and `q_vecs` (model).
///
/// Points are clustered in a canonical (sorted) order, so the score does not
/// depend on the order of vectors within either input.
pub fn mauve(
    p_vecs: &[Vec<f32>],
    q_vecs: &[Vec<f32>],
    params: &MauveParams,
) -> Result<MauveResult, MetricsError> {
    if p_vecs.is_empty() || q_vecs.is_empty() {
        return Err(MetricsError::Empty("mauve needs samples on both sides"));
    }
    let dim = p_vecs[0].len();
    if dim == 0 {
        return Err(MetricsError::Empty("embedding vectors have dimension 0"));
    }
    if let Some(v) = p_vecs.iter().chain(q_vecs).find(|v| v.len() != dim) {
        return Err(MetricsError::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let positive = |x: f64| x.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater);
    if params.grid_size == 0 || !positive(params.scale) || !positive(params.epsilon) {
        return Err(MetricsError::InvalidParams(
            "grid_size, scale and epsilon must be positive".into(),
        ));
    }
    let k = params.k.unwrap_or_else(|| default_k(p_vecs.len(), q_vecs.len()));
    if k == 0 {
        return Err(MetricsError::InvalidParams("k must be at least 1".into()));
    }
    for (side, n) in [("p", p_vecs.len()), ("q", q_vecs.len())] {
        if n < k {
            return Err(MetricsError::TooFewSamples { side, have: n, k });
        }
    }

    let mut joint: Vec<(Vec<f64>, bool)> = p_vecs
        .iter()
        .map(|v| (v.iter().map(|&x| x as f64).collect(), true))
        .chain(q_vecs.iter().map(|v| (v.iter().map(|&x| x as f64).collect(), false)))
        .collect();
    joint.sort_by(|a, b| lexicographic(&a.0, &b.0).then(a.1.cmp(&b.1)));
    let (points, from_p): (Vec<Vec<f64>>, Vec<bool>) = joint.into_iter().unzip();

    let fit = kmeans(
        &points,
        &KMeansConfig {
            k,
            max_iter: params.max_iter,
            tolerance: params.tolerance,
            seed: params.seed,
        },
    );
    let labels = || fit.assignments.iter().zip(&from_p);
    let p_hist = histogram(labels().filter(|(_, p)| **p).map(|(l, _)| *l), k, params.epsilon);
    let q_hist = histogram(labels().filter(|(_, p)| !**p).map(|(l, _)| *l), k, params.epsilon);

    let grid = lambda_grid(params.grid_size);
    let points = divergence_curve(&p_hist, &q_hist, params.scale, &grid);
    let score = frontier_area(&points);
    Ok(MauveResult {
        score,
        curve: DivergenceCurve {
            points,
            scale: params.scale,
            lambda_grid: grid,
        },
        k,
        p_histogram: p_hist,
        q_histogram: q_hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_k_rule() {
        assert_eq!(default_k(3, 4), 2);
        assert_eq!(default_k(200, 200), 40);
        assert_eq!(default_k(4000, 3000), 500);
    }

    #[test]
    fn kl_basics() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p), 0.0);
        let q = [0.5, 0.25, 0.25];
        let expected = 0.2 * (0.2f64 / 0.5).ln() + 0.3 * (0.3f64 / 0.25).ln() + 0.5 * (2.0f64).ln();
        assert!((kl_divergence(&p, &q) - expected).abs() < 1e-15);
    }

    #[test]
    fn grid_is_interior_and_uniform() {
        let g = lambda_grid(25);
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1.0 / 26.0).abs() < 1e-15 && (g[24] - 25.0 / 26.0).abs() < 1e-15);
    }

    #[test]
    fn area_of_trivial_frontiers() {
        assert_eq!(frontier_area(&[(1.0, 1.0)]), 1.0);
        assert_eq!(frontier_area(&[]), 0.5);
        // Non-monotone raw points are lifted to their envelope.
        let a = frontier_area(&[(0.4, 0.2), (0.5, 0.6)]);
        let expected = 0.4 * (1.0 + 0.6) / 2.0 + 0.1 * 0.6 + 0.5 * 0.6 / 2.0;
        assert!((a - expected).abs() < 1e-12, "{a} vs {expected}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = vec![vec![0.0f32, 1.0]; 3];
        let q = vec![vec![0.0f32, 1.0, 2.0]; 3];
        assert!(matches!(
            mauve(&p, &q, &MauveParams::default()),
            Err(MetricsError::DimensionMismatch { .. })
        ));
        let params = MauveParams {
            k: Some(5),
            ..Default::default()
        };
        assert!(matches!(
            mauve(&p, &p, &params),
            Err(MetricsError::TooFewSamples { side: "p", have: 3, k: 5 })
        ));
    }
}
