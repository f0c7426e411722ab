use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Email, IngestError, Split};

/// Number of train emails for a corpus of `n`: `floor(n * train_fraction)`.
///
/// A relative slack of 1e-9 absorbs binary rounding so that, for example,
/// `0.29 * 100` yields 29 rather than 28.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    let exact = n as f64 * train_fraction;
    (exact + exact.abs() * 1e-9).floor() as usize
}

/// Assigns train/test by a seeded uniform shuffle. Output keeps corpus order.
pub fn split_dataset(
    mut corpus: Vec<Email>,
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<Email>, IngestError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(IngestError::Fraction(train_fraction));
    }
    let n = corpus.len();
    let n_train = train_count(n, train_fraction);
    if n < 2 || n_train == 0 || n_train == n {
        return Err(IngestError::CorpusTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for e in corpus.iter_mut() {
        e.split = Split::Test;
    }
    for &i in &order[..n_train] {
        corpus[i].split = Split::Train;
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Vec<Email> {
        (0..n)
            .map(|i| Email {
                id: format!("msg-{i:06}"),
                subject: String::new(),
                body: format!("body {i}"),
                sent_at: None,
                split: Split::Unassigned,
            })
            .collect()
    }

    fn counts(c: &[Email]) -> (usize, usize) {
        let train = c.iter().filter(|e| e.split == Split::Train).count();
        let test = c.iter().filter(|e| e.split == Split::Test).count();
        (train, test)
    }

    #[test]
    fn eighty_twenty() {
        assert_eq!(counts(&split_dataset(corpus(100), 0.8, 7).unwrap()), (80, 20));
    }

    #[test]
    fn smallest_legal_corpus() {
        assert_eq!(counts(&split_dataset(corpus(2), 0.5, 0).unwrap()), (1, 1));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = split_dataset(corpus(50), 0.8, 3).unwrap();
        let b = split_dataset(corpus(50), 0.8, 3).unwrap();
        let c = split_dataset(corpus(50), 0.8, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rounding_slack() {
        assert_eq!(train_count(100, 0.29), 29);
        assert_eq!(train_count(742, 0.8), 593);
        assert_eq!(train_count(10, 0.7), 7);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(split_dataset(corpus(1), 0.8, 0), Err(IngestError::CorpusTooSmall(1))));
        assert!(matches!(split_dataset(corpus(0), 0.8, 0), Err(IngestError::CorpusTooSmall(0))));
        assert!(matches!(split_dataset(corpus(3), 0.2, 0), Err(IngestError::CorpusTooSmall(3))));
        assert!(matches!(split_dataset(corpus(10), 1.0, 0), Err(IngestError::Fraction(_))));
        assert!(matches!(split_dataset(corpus(10), 0.0, 0), Err(IngestError::Fraction(_))));
        assert!(matches!(split_dataset(corpus(10), f64::NAN, 0), Err(IngestError::Fraction(_))));
    }
}
