//! Minimal dense N-dimensional numeric kernel.
//!
//! Activations are 64-bit floats in row-major order. Rank-4 activation
//! tensors use the channels-last convention `(depth, height, width,
//! channels)`; batches prepend the sample axis.

mod layers;
mod network;

pub use layers::{
    conv3d_forward, cross_entropy_loss, dense_forward, maxpool3d_forward, relu, softmax,
    LayerKind, LayerSpec, Padding, CROSS_ENTROPY_EPSILON,
};
pub use network::{
    backward_pass, expected_param_shapes, fingerprint_text, finite_difference_check, forward_loss,
    forward_network, layer_param_names, network_output_shapes, sgd_step, Gradients, ModelParams,
};

use crate::error::{CoreError, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::Dimension(format!(
                "shape {:?} expects {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// Seeded draw from a normal distribution with the given standard deviation.
    pub fn normal<R: Rng>(shape: Vec<usize>, std_dev: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std_dev).expect("valid std dev");
        let data = (0..n).map(|_| dist.sample(rng)).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterprets the buffer under a new shape of equal volume.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(CoreError::Dimension(format!(
                "cannot reshape {} values into {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Stacks same-shaped samples along a new leading axis.
    pub fn stack(samples: &[Tensor]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| CoreError::InvalidArgument("cannot stack zero tensors".into()))?;
        let mut shape = Vec::with_capacity(first.rank() + 1);
        shape.push(samples.len());
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.shape() != first.shape() {
                return Err(CoreError::Dimension(format!(
                    "stack: sample {} has shape {:?}, expected {:?}",
                    i,
                    s.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(s.data());
        }
        Ok(Self { shape, data })
    }

    /// Number of entries along the leading axis (0 for rank-0 tensors).
    pub fn leading(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Copies out entry `index` along the leading axis.
    pub fn row(&self, index: usize) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(CoreError::Dimension("row of a rank-0 tensor".into()));
        }
        let n = self.shape[0];
        if index >= n {
            return Err(CoreError::Dimension(format!(
                "row index {index} out of range for leading extent {n}"
            )));
        }
        let stride: usize = self.shape[1..].iter().product();
        let data = self.data[index * stride..(index + 1) * stride].to_vec();
        Tensor::new(self.shape[1..].to_vec(), data)
    }
}
