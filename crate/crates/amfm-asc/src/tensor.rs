//! Dense tensors and the four-axis feature map view.
//!
//! [`Tensor`] is a row-major `f64` array with an explicit shape; it is the
//! universal value type for parameters, activations and gradients. A
//! [`FeatureMap`] is a tensor constrained to rank 4 with `[batch, channels,
//! time, frequency]` semantics.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Dense N-dimensional array, row-major, double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Construct from a shape and a flat buffer. The buffer length must equal
    /// the product of the extents.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        if data.len() != numel {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// i.i.d. N(0, std^2) entries drawn from `rng`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut SeededRng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| std * rng.normal()).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret with a new shape of the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({})",
                self.shape,
                self.data.len(),
                shape,
                numel
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Flat offset of a rank-2 index.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Rank-4 tensor with `[B, C, T, F]` semantics: batch, channels, time frames,
/// frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    tensor: Tensor,
}

impl FeatureMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(Error::shape(format!(
                "feature map must have rank 4, got shape {:?}",
                tensor.shape()
            )));
        }
        Ok(FeatureMap { tensor })
    }

    pub fn zeros(b: usize, c: usize, t: usize, f: usize) -> Self {
        FeatureMap {
            tensor: Tensor::zeros(&[b, c, t, f]),
        }
    }

    pub fn randn(b: usize, c: usize, t: usize, f: usize, std: f64, rng: &mut SeededRng) -> Self {
        FeatureMap {
            tensor: Tensor::randn(&[b, c, t, f], std, rng),
        }
    }

    /// (batch, channels, time, frequency) extents.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.tensor.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn batch(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn bins(&self) -> usize {
        self.tensor.shape()[3]
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, t: usize, f: usize) -> usize {
        let s = self.tensor.shape();
        ((b * s[1] + c) * s[2] + t) * s[3] + f
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize, f: usize) -> f64 {
        self.tensor.data()[self.offset(b, c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, f: usize, v: f64) {
        let i = self.offset(b, c, t, f);
        self.tensor.data_mut()[i] = v;
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.tensor.data_mut()
    }

    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }

    /// Stack single-sample maps `[1, C, T, F]` into one batch `[N, C, T, F]`.
    pub fn stack(maps: &[&FeatureMap]) -> Result<FeatureMap> {
        if maps.is_empty() {
            return Err(Error::shape("cannot stack zero feature maps"));
        }
        let (b0, c, t, f) = maps[0].dims();
        if b0 != 1 {
            return Err(Error::shape("stack expects batch-1 maps"));
        }
        let mut data = Vec::with_capacity(maps.len() * c * t * f);
        for m in maps {
            if m.dims() != (1, c, t, f) {
                return Err(Error::shape(format!(
                    "inconsistent shapes in stack: {:?} vs {:?}",
                    m.dims(),
                    (1, c, t, f)
                )));
            }
            data.extend_from_slice(m.data());
        }
        FeatureMap::new(Tensor::from_vec(vec![maps.len(), c, t, f], data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        assert!(Tensor::from_vec(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn reshape_preserves_numel() {
        let t = Tensor::from_vec(vec![2, 6], (0..12).map(|i| i as f64).collect()).unwrap();
        let r = t.clone().reshape(vec![3, 4]).unwrap();
        assert_eq!(r.shape(), &[3, 4]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(vec![5, 5]).is_err());
    }

    #[test]
    fn feature_map_requires_rank_4() {
        assert!(FeatureMap::new(Tensor::zeros(&[1, 2, 3])).is_err());
        let fm = FeatureMap::zeros(2, 3, 4, 5);
        assert_eq!(fm.dims(), (2, 3, 4, 5));
    }

    #[test]
    fn indexing_is_row_major() {
        let mut fm = FeatureMap::zeros(2, 2, 2, 2);
        fm.set(1, 0, 1, 0, 7.0);
        // ((b*C + c)*T + t)*F + f = ((1*2 + 0)*2 + 1)*2 + 0 = 10
        assert_eq!(fm.data()[10], 7.0);
        assert_eq!(fm.at(1, 0, 1, 0), 7.0);
    }

    #[test]
    fn stack_concatenates_batches() {
        let a =
            FeatureMap::new(Tensor::from_vec(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap()).unwrap();
        let b =
            FeatureMap::new(Tensor::from_vec(vec![1, 1, 1, 2], vec![3.0, 4.0]).unwrap()).unwrap();
        let s = FeatureMap::stack(&[&a, &b]).unwrap();
        assert_eq!(s.dims(), (2, 1, 1, 2));
        assert_eq!(s.data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
