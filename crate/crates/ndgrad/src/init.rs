use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NdError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// SplitMix64 finalizer; used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draws on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, seed: u64) -> Result<Tensor<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(NdError::ZeroFan { fan_in, fan_out });
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.gen_range(-limit..=limit)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_bound_when_fans_sum_to_six() {
        let t = glorot_init::<f64>(&[50, 20], 3, 3, 11).unwrap();
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn same_seed_same_tensor() {
        let a = glorot_init::<f32>(&[8, 8], 4, 9, 5).unwrap();
        let b = glorot_init::<f32>(&[8, 8], 4, 9, 5).unwrap();
        assert_eq!(a, b);
        let c = glorot_init::<f32>(&[8, 8], 4, 9, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_fan_rejected() {
        assert!(matches!(
            glorot_init::<f64>(&[2], 0, 3, 1),
            Err(NdError::ZeroFan { .. })
        ));
    }

    #[test]
    fn monte_carlo_mean_near_zero() {
        let t = glorot_init::<f64>(&[10_000], 3, 3, 2024).unwrap();
        let mean = t.data().iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }
}
