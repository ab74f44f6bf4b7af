use crate::autodiff::Tensor;
use crate::{RngState, Scalar};

pub fn normal<T: Scalar>(shape: &[usize], std: f64, rng: &mut RngState) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.normal(std))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

/// Glorot-uniform `[fan_in, fan_out]` matrix.
pub fn xavier<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::from_f64_lossy((2.0 * rng.uniform() - 1.0) * limit))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape product matches")
}
