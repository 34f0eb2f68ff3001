use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use super::NumericError;

/// Dense row-major `f32` tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NumericError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// A single-element tensor of rank 0.
    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Samples i.i.d. normal entries with the given standard deviation.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f32, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f32 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        write!(f, " {head:?}")?;
        if self.data.len() > PREVIEW {
            write!(f, "..")?;
        }
        Ok(())
    }
}

/// Spatial output extent of a strided, padded window sweep.
pub fn conv_output_extent(n: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || n + 2 * pad < kernel {
        return None;
    }
    Some((n + 2 * pad - kernel) / stride + 1)
}

/// Spatial output extent of a transposed convolution.
pub fn conv_transpose_output_extent(
    n: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Option<usize> {
    if n == 0 || stride == 0 {
        return None;
    }
    ((n - 1) * stride + kernel).checked_sub(2 * pad).filter(|&e| e > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert_eq!(Tensor::scalar(2.5).numel(), 1);
    }

    #[test]
    fn output_extent_law_exhaustive() {
        for n in 1..=8usize {
            for k in 1..=8usize {
                for s in 1..=8usize {
                    for p in 0..=8usize {
                        let got = conv_output_extent(n, k, s, p);
                        let padded = n as i64 + 2 * p as i64 - k as i64;
                        if padded < 0 {
                            assert_eq!(got, None);
                        } else {
                            assert_eq!(got, Some((padded as usize) / s + 1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn transpose_extent_inverts_stride_two() {
        for n in 1..=16 {
            let up = conv_transpose_output_extent(n, 4, 2, 1).unwrap();
            assert_eq!(up, 2 * n);
            assert_eq!(conv_output_extent(up, 4, 2, 1), Some(n));
        }
    }
}
