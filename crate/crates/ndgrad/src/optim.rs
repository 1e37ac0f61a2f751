use crate::error::{NdError, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

pub const RMSPROP_RHO: f64 = 0.9;
pub const RMSPROP_EPSILON: f64 = 1e-8;

/// RMSprop with one running mean of squared gradients per parameter.
#[derive(Clone, Debug)]
pub struct RmsProp<T> {
    pub learning_rate: T,
    pub rho: T,
    pub epsilon: T,
    accumulators: Vec<Vec<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_coefficients(learning_rate, RMSPROP_RHO, RMSPROP_EPSILON)
    }

    pub fn with_coefficients(learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        assert!(learning_rate >= 0.0, "learning rate must be nonnegative");
        assert!(rho > 0.0 && rho < 1.0, "rho must lie in (0, 1)");
        assert!(epsilon > 0.0, "epsilon must be positive");
        Self {
            learning_rate: T::from_f64_lossy(learning_rate),
            rho: T::from_f64_lossy(rho),
            epsilon: T::from_f64_lossy(epsilon),
            accumulators: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<T>] {
        &self.accumulators
    }

    /// Applies one update to every trainable parameter holding a gradient.
    /// A non-finite gradient anywhere rejects the whole step and leaves both
    /// parameters and accumulators untouched.
    pub fn step(&mut self, graph: &mut Graph<T>) -> Result<()> {
        for p in graph.params() {
            if let Some(g) = p.value.grad() {
                if p.trainable && g.iter().any(|v| !v.is_finite()) {
                    return Err(NdError::NonFiniteGradient { param: p.name.clone() });
                }
            }
        }
        if self.accumulators.len() != graph.params().len() {
            self.accumulators = graph.params().iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        }
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        for (p, acc) in graph.params_mut().iter_mut().zip(&mut self.accumulators) {
            if !p.trainable {
                continue;
            }
            let Some(g) = p.value.grad().map(|g| g.to_vec()) else { continue };
            rmsprop_update(p.value.data_mut(), &g, acc, lr, rho, eps);
        }
        Ok(())
    }
}

/// `acc ← ρ·acc + (1−ρ)·g²;  param ← param − lr·g / (√acc + ε)`, elementwise.
pub fn rmsprop_update<T: Scalar>(params: &mut [T], grads: &[T], acc: &mut [T], lr: T, rho: T, eps: T) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), acc.len());
    for ((p, &g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        *a = rho * *a + (T::one() - rho) * g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_accumulator() {
        let mut p = vec![1.5f64, -2.0];
        let mut acc = vec![0.4, 0.2];
        rmsprop_update(&mut p, &[0.0, 0.0], &mut acc, 0.01, 0.9, 1e-8);
        assert_eq!(p, vec![1.5, -2.0]);
        assert!((acc[0] - 0.36).abs() < 1e-15 && (acc[1] - 0.18).abs() < 1e-15);
    }

    #[test]
    fn single_scalar_step_hand_computed() {
        let mut p = vec![0.0f64];
        let mut acc = vec![0.0];
        rmsprop_update(&mut p, &[1.0], &mut acc, 0.01, 0.9, 1e-8);
        assert!((acc[0] - 0.1).abs() < 1e-15);
        let expected = -0.01 / (0.1f64.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn accumulator_nondecreasing_under_constant_gradient() {
        let mut p = vec![0.0f64];
        let mut acc = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..50 {
            rmsprop_update(&mut p, &[0.7], &mut acc, 0.01, 0.9, 1e-8);
            assert!(acc[0] >= prev);
            prev = acc[0];
        }
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut p = vec![0.3f32, 0.4];
        let mut acc = vec![0.0; 2];
        rmsprop_update(&mut p, &[5.0, -3.0], &mut acc, 0.0, 0.9, 1e-8);
        assert_eq!(p, vec![0.3, 0.4]);
    }
}
