use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;
pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Disjoint index sets covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then the first `⌊fraction·n⌋` indices train and the rest test.
pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    if n < MIN_SPLIT_SAMPLES {
        return Err(invalid(format!("splitting needs at least {MIN_SPLIT_SAMPLES} samples, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = fraction_count(n, train_fraction);
    let test = order.split_off(n_train);
    Ok(Split { train: order, test })
}

/// `⌊fraction·n⌋`, robust to representation error such as `0.9·100`.
pub(crate) fn fraction_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_ratio() {
        let s = split(100, 0.9, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (90, 10));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(split(100, 1.0, 0).is_err());
        assert!(split(100, 0.0, 0).is_err());
        assert!(split(9, 0.5, 0).is_err());
    }
}
