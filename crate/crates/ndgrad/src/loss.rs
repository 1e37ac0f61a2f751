//! Training objectives: mean squared error for regression heads and
//! cross-entropy for softmax heads.

use crate::error::{NdError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean over all elements of `(pred − target)²`, with its gradient.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &[T]) -> Result<(T, Tensor<T>)> {
    if pred.len() != target.len() {
        return Err(NdError::DataLength {
            shape: pred.shape().to_vec(),
            expected: pred.len(),
            actual: target.len(),
        });
    }
    let n = T::from_usize(pred.len()).unwrap();
    let two = T::from_f64_lossy(2.0);
    let mut loss = T::zero();
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / n
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Cross-entropy of softmax probabilities `(batch, k)` against integer labels.
/// Returns the mean loss and the gradient with respect to the pre-softmax
/// logits, `(p − onehot) / batch`.
pub fn softmax_cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let shape = probs.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(NdError::DataLength {
            shape: shape.to_vec(),
            expected: shape[0],
            actual: labels.len(),
        });
    }
    let k = shape[1];
    let batch = T::from_usize(labels.len()).unwrap();
    let tiny = T::from_f64_lossy(1e-12);
    let mut grad = probs.data().to_vec();
    let mut loss = T::zero();
    for (row, &y) in grad.chunks_exact_mut(k).zip(labels) {
        assert!(y < k, "label {y} out of range for {k} classes");
        loss -= row[y].max(tiny).ln();
        row[y] -= T::one();
        row.iter_mut().for_each(|v| *v /= batch);
    }
    Ok((loss / batch, Tensor::new(shape.to_vec(), grad)?))
}
