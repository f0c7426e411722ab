//! Seeded k-means with k-means++ initialisation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative inertia change falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            tolerance: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn init_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // Every point coincides with a centroid already.
            Err(_) => rng.random_range(0..points.len()),
        };
        let c = points[next].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from a k-means++ start. `points` must be non-empty,
/// share one dimension and number at least `cfg.k`.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> KMeansFit {
    assert!(cfg.k >= 1 && points.len() >= cfg.k, "need at least k points");
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = init_plus_plus(points, cfg.k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia = 0.0;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        inertia = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (idx, d) = nearest(p, &centroids);
            *a = idx;
            inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            // Empty clusters keep their previous centroid.
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        let converged = inertia == 0.0
            || (prev_inertia.is_finite() && (prev_inertia - inertia).abs() <= cfg.tolerance * prev_inertia);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }
    // Final assignment against the last centroid update.
    for (a, p) in assignments.iter_mut().zip(points) {
        *a = nearest(p, &centroids).0;
    }
    KMeansFit {
        centroids,
        assignments,
        inertia,
        iterations,
    }
}
