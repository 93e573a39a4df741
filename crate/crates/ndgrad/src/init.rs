use crate::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Fan-in/fan-out for a weight shape.
///
/// Rank 2 `[Din,Dout]`; rank 3 conv1d `[k,Cin,Cout]` gives `(k*Cin, k*Cout)`;
/// rank 4 conv2d `[kh,kw,Cin,Cout]` gives `(kh*kw*Cin, kh*kw*Cout)`.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (shape[0], shape[0]),
        2 => (shape[0], shape[1]),
        3 => (shape[0] * shape[1], shape[0] * shape[2]),
        4 => (shape[0] * shape[1] * shape[2], shape[0] * shape[1] * shape[3]),
        _ => panic!("no fan-in/fan-out convention for shape {shape:?}"),
    }
}

/// Xavier (Glorot) uniform initialization: values drawn uniformly from
/// `+-sqrt(6/(fan_in+fan_out))`, deterministic for a given seed.
pub fn xavier_uniform<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let (fan_in, fan_out) = fans(shape);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let numel: usize = shape.iter().product();
    let data: Vec<T> = (0..numel)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let a: Tensor<f32> = xavier_uniform(&[16, 8], 42);
        let b: Tensor<f32> = xavier_uniform(&[16, 8], 42);
        assert_eq!(a, b);
        let c: Tensor<f32> = xavier_uniform(&[16, 8], 43);
        assert_ne!(a, c);
    }

    #[test]
    fn values_within_bound() {
        let t: Tensor<f64> = xavier_uniform(&[3, 3, 4, 8], 7);
        let bound = (6.0f64 / (3.0 * 3.0 * 4.0 + 3.0 * 3.0 * 8.0)).sqrt();
        assert!(t.data().iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn empirical_variance_near_2_over_fan_sum() {
        let t: Tensor<f64> = xavier_uniform(&[256, 256], 11);
        let n = t.numel() as f64;
        let mean: f64 = t.data().iter().sum::<f64>() / n;
        let var: f64 = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expect = 2.0 / (256.0 + 256.0);
        assert!(
            (var - expect).abs() < 0.2 * expect,
            "var={var}, expected about {expect}"
        );
    }

    #[test]
    fn conv_fans_follow_kernel_volume() {
        assert_eq!(fans(&[3, 3, 16, 32]), (144, 288));
        assert_eq!(fans(&[5, 256, 512]), (1280, 2560));
    }
}
