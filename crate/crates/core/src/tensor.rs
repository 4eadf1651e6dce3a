//! Dense row-major f32 tensor.

use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Result, TensorError};

/// Dense N-d array of f32 values in row-major order.
///
/// Value semantics are plain: construction validates `product(shape) ==
/// data.len()` and operations never mutate an existing tensor in place.
/// Gradient participation is opted into with [`SpikeTensor::with_grad`] and
/// realized on a [`crate::tape::Tape`], which owns the gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
}

impl SpikeTensor {
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::LengthMismatch {
                expected: numel,
                got: data.len(),
            });
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::Invalid(alloc::format!(
                "zero extent in shape {shape:?}"
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
            requires_grad: false,
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self::full(&[1], value)
    }

    /// Uniform values in `[lo, hi)`.
    pub fn rand_uniform<R: Rng>(shape: &[usize], lo: f32, hi: f32, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Self {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        }
    }

    /// Kaiming-uniform fan-in init: bound = sqrt(6 / fan_in).
    pub fn kaiming_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = libm::sqrtf(6.0 / fan_in.max(1) as f32);
        Self::rand_uniform(shape, -bound, bound, rng)
    }

    /// Marks the tensor as a gradient leaf when placed on a tape.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(TensorError::LengthMismatch {
                expected: numel,
                got: self.data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
            requires_grad: self.requires_grad,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// True when every element is exactly 0.0 or 1.0.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Extent of axis `i`, or 1 past the rank (used by broadcast arithmetic).
    pub fn extent(&self, i: usize) -> usize {
        self.shape.get(i).copied().unwrap_or(1)
    }
}

/// Row-major offset for a 4-d index.
#[inline(always)]
pub fn idx4(shape: &[usize], b: usize, c: usize, h: usize, w: usize) -> usize {
    ((b * shape[1] + c) * shape[2] + h) * shape[3] + w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(SpikeTensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        let err = SpikeTensor::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::LengthMismatch { expected: 6, got: 5 }));
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(SpikeTensor::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn kaiming_bound_respected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = SpikeTensor::kaiming_uniform(&[8, 4, 3, 3], 4 * 9, &mut rng);
        let bound = libm::sqrtf(6.0 / 36.0);
        assert!(t.data().iter().all(|v| v.abs() < bound));
    }

    use rand::SeedableRng;
}
