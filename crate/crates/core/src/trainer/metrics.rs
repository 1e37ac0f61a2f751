use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegReport {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// RMSE and MAE use means; R² is `1 − SS_res/SS_tot` about the truth mean and is not clamped.
/// A constant truth vector gives R² of 1 for a perfect fit and 0 otherwise.
pub fn eval_regression(preds: &[f64], truths: &[f64]) -> Result<RegReport> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Dimension(format!(
            "regression metrics need equal nonzero lengths, got {} predictions and {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let n = preds.len() as f64;
    let mean = truths.iter().sum::<f64>() / n;
    let (mut ss_res, mut abs, mut ss_tot) = (0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        ss_res += (p - t) * (p - t);
        abs += (p - t).abs();
        ss_tot += (t - mean) * (t - mean);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(RegReport {
        rmse: (ss_res / n).sqrt(),
        mae: abs / n,
        r2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 (0 on empty denominators) and unweighted macro means.
pub fn eval_classification(preds: &[usize], truths: &[usize], k: usize) -> Result<ClassReport> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(Error::Dimension(format!(
            "classification metrics need equal nonzero lengths, got {} and {}",
            preds.len(),
            truths.len()
        )));
    }
    if let Some(bad) = preds.iter().chain(truths).find(|&&l| l >= k) {
        return Err(invalid(format!("label {bad} outside 0..{k}")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in preds.iter().zip(truths) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassScores> = (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(ClassReport {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        accuracy: correct as f64 / preds.len() as f64,
        per_class,
        confusion,
    })
}

/// Always predicts the training mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageBaseline {
    pub mean: f64,
}

impl AverageBaseline {
    pub fn predict(&self, n: usize) -> Vec<f64> {
        vec![self.mean; n]
    }
}

pub fn average_baseline(train_prices: &[f64]) -> Result<AverageBaseline> {
    if train_prices.is_empty() {
        return Err(invalid("average baseline needs at least one training price"));
    }
    Ok(AverageBaseline {
        mean: train_prices.iter().sum::<f64>() / train_prices.len() as f64,
    })
}
