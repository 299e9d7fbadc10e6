//! Layer primitives with forward and backward passes.
//!
//! Everything here is a pure function over borrowed inputs. Layouts are
//! channel-major: a [`FeatureMap`] stores `channels` rows of `frames`
//! values, a [`KernelBank`] stores `out × in × width` weights.
//!
//! Convolution is implemented as cross-correlation,
//! `y[o][t] = b[o] + Σ_c Σ_k w[o][c][k] · x[c][t + k]`. The flipped form
//! `Σ_d x(i − d) ω(d)` is the same operation applied to the reversed kernel,
//! so a learned kernel simply absorbs the reversal.

pub(crate) mod activation;
mod batchnorm;
pub(crate) mod conv;
mod dense;
pub mod gradcheck;
mod loss;
mod pool;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumCast};

use crate::{Error, Result};

pub use activation::{relu_backward, relu_forward, softmax};
pub use batchnorm::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, BatchNormCache, BatchNormGrads,
    BatchNormParams, BatchNormTrainOutput, BATCHNORM_EPSILON, BATCHNORM_MOMENTUM,
};
pub use conv::{conv1d_backward, conv1d_forward, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseLayer};
pub use gradcheck::{gradient_check, relative_error, CoordinateCheck, GradCheckReport, GradientProbe, Probe};
pub use loss::{
    binary_cross_entropy, categorical_cross_entropy, categorical_cross_entropy_labels,
    one_hot, softmax_cce_backward, LossValue, PROBABILITY_FLOOR,
};
pub use pool::{maxpool1d_backward, maxpool1d_forward, pooled_frames, PoolOutput};

/// Floating-point element type for activations and parameters.
pub trait Real:
    Float + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn of(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 converts to every Real type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A `channels × frames` activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    frames: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    /// Builds a map from channel-major data, rejecting non-finite entries.
    pub fn new(channels: usize, frames: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || frames == 0 {
            return Err(Error::Dimension(format!(
                "feature map needs positive shape, got {channels}x{frames}"
            )));
        }
        if data.len() != channels * frames {
            return Err(Error::Dimension(format!(
                "feature map {channels}x{frames} needs {} values, got {}",
                channels * frames,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature map contains a non-finite value".into()));
        }
        Ok(Self {
            channels,
            frames,
            data,
        })
    }

    /// Builds a map from one `Vec` per channel.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let channels = rows.len();
        let frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != frames) {
            return Err(Error::Dimension("feature map rows differ in length".into()));
        }
        Self::new(channels, frames, rows.concat())
    }

    pub fn zeros(channels: usize, frames: usize) -> Self {
        Self {
            channels,
            frames,
            data: vec![T::zero(); channels * frames],
        }
    }

    pub(crate) fn from_parts(channels: usize, frames: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * frames);
        Self {
            channels,
            frames,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, channel: usize) -> &[T] {
        &self.data[channel * self.frames..(channel + 1) * self.frames]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [T] {
        &mut self.data[channel * self.frames..(channel + 1) * self.frames]
    }

    pub fn get(&self, channel: usize, frame: usize) -> T {
        self.data[channel * self.frames + frame]
    }

    /// Converts every element to another precision.
    pub fn cast<U: Real>(&self) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            frames: self.frames,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Convolution weights `out × in × width` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank<T> {
    out_channels: usize,
    in_channels: usize,
    width: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> KernelBank<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        width: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "kernel bank needs positive shape, got {out_channels}x{in_channels}x{width}"
            )));
        }
        if weights.len() != out_channels * in_channels * width || bias.len() != out_channels {
            return Err(Error::Dimension(format!(
                "kernel bank {out_channels}x{in_channels}x{width} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("kernel bank contains a non-finite value".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            width,
            weights,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, width: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            width,
            weights: vec![T::zero(); out_channels * in_channels * width],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn weights_and_bias_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }

    /// The `width` taps connecting input channel `c` to output channel `o`.
    pub fn taps(&self, o: usize, c: usize) -> &[T] {
        let start = (o * self.in_channels + c) * self.width;
        &self.weights[start..start + self.width]
    }

    pub fn cast<U: Real>(&self) -> KernelBank<U> {
        KernelBank {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            width: self.width,
            weights: self.weights.iter().map(|v| U::of(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// `Σ a[i]·b[i]` with eight interleaved partial sums so the loop vectorizes.
///
/// The summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for l in 0..8 {
            lanes[l] = lanes[l] + ca[l] * cb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
        + tail
}

/// `y += alpha · x`
#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_map_rejects_bad_shapes_and_nan() {
        assert!(FeatureMap::<f32>::new(2, 3, vec![0.0; 5]).is_err());
        assert!(FeatureMap::<f32>::new(0, 3, vec![]).is_err());
        assert!(matches!(
            FeatureMap::new(1, 2, vec![1.0f32, f32::NAN]),
            Err(Error::Numeric(_))
        ));
        let m = FeatureMap::from_rows(vec![vec![1.0f64, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.get(0, 1), 2.0);
    }

    #[test]
    fn dot_matches_sequential_sum_on_integers() {
        let a: Vec<f64> = (0..37).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..37).map(|i| (i % 5) as f64).collect();
        let expected: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot(&a, &b), expected);
    }
}
