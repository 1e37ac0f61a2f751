use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Price-segment classes from percentile cutoffs of training prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentScheme {
    pub percentile_cutoffs: Vec<f64>,
    pub price_boundaries: Vec<f64>,
}

/// Nearest-rank percentile: the `⌈p/100·n⌉`-th smallest value (1-based, at least 1).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

impl SegmentScheme {
    pub fn num_classes(&self) -> usize {
        self.price_boundaries.len()
    }

    /// Index of the first boundary ≥ price; prices above the top boundary clamp to the last class.
    pub fn label(&self, price: f64) -> usize {
        self.price_boundaries
            .iter()
            .position(|&b| b >= price)
            .unwrap_or(self.price_boundaries.len() - 1)
    }
}

/// Derives boundaries from training prices. A boundary that ties its predecessor
/// is moved up to the next distinct training price so the class count is kept.
pub fn make_segments(train_prices: &[f64], cutoffs: &[f64]) -> Result<SegmentScheme> {
    if train_prices.is_empty() {
        return Err(invalid("segmentation needs at least one training price"));
    }
    if cutoffs.is_empty() || cutoffs.last() != Some(&100.0) {
        return Err(invalid(format!("percentile cutoffs must end at 100, got {cutoffs:?}")));
    }
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) || cutoffs[0] <= 0.0 {
        return Err(invalid(format!("percentile cutoffs must ascend within (0, 100], got {cutoffs:?}")));
    }
    let mut sorted = train_prices.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < cutoffs.len() {
        return Err(invalid(format!(
            "{} distinct training prices cannot form {} classes",
            distinct.len(),
            cutoffs.len()
        )));
    }
    let mut boundaries: Vec<f64> = Vec::with_capacity(cutoffs.len());
    for &p in cutoffs {
        let mut b = nearest_rank(&sorted, p);
        if let Some(&prev) = boundaries.last() {
            if b <= prev {
                b = *distinct
                    .iter()
                    .find(|&&v| v > prev)
                    .ok_or_else(|| invalid(format!("percentile {p} collapses onto boundary {prev}")))?;
            }
        }
        boundaries.push(b);
    }
    Ok(SegmentScheme {
        percentile_cutoffs: cutoffs.to_vec(),
        price_boundaries: boundaries,
    })
}
