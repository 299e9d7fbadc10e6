//! Central finite-difference gradient checking.
//!
//! A [`GradientProbe`] exposes a flat coordinate vector, a scalar loss with a
//! "pattern" fingerprint of every discrete choice made on the way (ReLU
//! signs, pooling winners) and the analytic gradient. A coordinate whose
//! ±ε perturbation changes the fingerprint straddles a kink; it is skipped
//! and counted instead of compared.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::activation::relu_forward;
use super::batchnorm::{batchnorm_backward, batchnorm_train, BatchNormParams};
use super::conv::{conv1d_backward, conv1d_forward};
use super::dense::{dense_backward, dense_forward, DenseLayer};
use super::loss::{categorical_cross_entropy_labels, softmax_cce_backward};
use super::pool::{maxpool1d_backward, maxpool1d_forward};
use super::{relu_backward, softmax, FeatureMap, KernelBank, Real};
use crate::{Error, Result};

/// Denominator floor for the relative error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub loss: f64,
    /// Fingerprint of the non-smooth decisions taken while computing `loss`.
    pub pattern: u64,
}

pub trait GradientProbe<T: Real> {
    /// The point at which the gradient is checked.
    fn point(&self) -> Vec<T>;

    fn evaluate(&self, point: &[T]) -> Result<Probe>;

    /// Analytic gradient of the loss at `point`.
    fn gradient(&self, point: &[T]) -> Result<Vec<T>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_coordinate: Option<usize>,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a kink.
    pub skipped: usize,
    /// Every coordinate in order; skipped ones have no numeric estimate.
    pub coordinates: Vec<CoordinateCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateCheck {
    pub analytic: f64,
    pub numeric: Option<f64>,
}

impl CoordinateCheck {
    pub fn relative_error(&self) -> Option<f64> {
        self.numeric.map(|n| relative_error(self.analytic, n))
    }
}

/// `|a − b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

pub fn gradient_check<T: Real, P: GradientProbe<T> + ?Sized>(probe: &P, epsilon: f64) -> Result<GradCheckReport> {
    if !(1e-6..=1e-2).contains(&epsilon) {
        return Err(Error::Input(format!("epsilon must lie in [1e-6, 1e-2], got {epsilon}")));
    }
    let point = probe.point();
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("gradient check point has a non-finite entry".into()));
    }
    let base = probe.evaluate(&point)?;
    let analytic = probe.gradient(&point)?;
    if analytic.len() != point.len() {
        return Err(Error::Dimension(format!(
            "probe gradient has {} entries for {} coordinates",
            analytic.len(),
            point.len()
        )));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_coordinate: None,
        checked: 0,
        skipped: 0,
        coordinates: Vec::with_capacity(point.len()),
    };
    let mut work = point.clone();
    for i in 0..point.len() {
        let x = point[i].as_f64();
        let plus = T::of(x + epsilon);
        let minus = T::of(x - epsilon);
        work[i] = plus;
        let up = probe.evaluate(&work)?;
        work[i] = minus;
        let down = probe.evaluate(&work)?;
        work[i] = point[i];
        let a = analytic[i].as_f64();
        if up.pattern != base.pattern || down.pattern != base.pattern {
            report.skipped += 1;
            report.coordinates.push(CoordinateCheck { analytic: a, numeric: None });
            continue;
        }
        // Divide by the step actually representable in T.
        let step = plus.as_f64() - minus.as_f64();
        let numeric = (up.loss - down.loss) / step;
        let err = relative_error(a, numeric);
        report.coordinates.push(CoordinateCheck {
            analytic: a,
            numeric: Some(numeric),
        });
        report.checked += 1;
        if report.worst_coordinate.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_coordinate = Some(i);
        }
    }
    Ok(report)
}

pub(crate) fn fingerprint<H: Hash>(items: impl IntoIterator<Item = H>) -> u64 {
    let mut hasher = DefaultHasher::new();
    for item in items {
        item.hash(&mut hasher);
    }
    hasher.finish()
}

fn weighted_sum<T: Real>(values: &[T], weights: &[T]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v.as_f64() * w.as_f64()).sum()
}

/// Convolution under the linear loss `Σ u ⊙ conv(x)`.
/// Coordinates: input, then weights, then bias.
#[derive(Debug, Clone)]
pub struct ConvProbe<T> {
    pub input: FeatureMap<T>,
    pub kernels: KernelBank<T>,
    pub upstream: FeatureMap<T>,
}

impl<T: Real> ConvProbe<T> {
    fn unpack(&self, point: &[T]) -> Result<(FeatureMap<T>, KernelBank<T>)> {
        let n_in = self.input.data().len();
        let n_w = self.kernels.weights().len();
        let input = FeatureMap::new(self.input.channels(), self.input.frames(), point[..n_in].to_vec())?;
        let kernels = KernelBank::new(
            self.kernels.out_channels(),
            self.kernels.in_channels(),
            self.kernels.width(),
            point[n_in..n_in + n_w].to_vec(),
            point[n_in + n_w..].to_vec(),
        )?;
        Ok((input, kernels))
    }
}

impl<T: Real> GradientProbe<T> for ConvProbe<T> {
    fn point(&self) -> Vec<T> {
        [self.input.data(), self.kernels.weights(), self.kernels.bias()].concat()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let (input, kernels) = self.unpack(point)?;
        let out = conv1d_forward(&input, &kernels)?;
        Ok(Probe {
            loss: weighted_sum(out.data(), self.upstream.data()),
            pattern: 0,
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        let (input, kernels) = self.unpack(point)?;
        let g = conv1d_backward(&input, &kernels, &self.upstream)?;
        Ok([g.input_grad.data(), &g.weight_grad, &g.bias_grad].concat())
    }
}

/// Dense layer under the linear loss `Σ u ⊙ (W·x + b)`.
/// Coordinates: input, then weights, then bias.
#[derive(Debug, Clone)]
pub struct DenseProbe<T> {
    pub input: Vec<T>,
    pub layer: DenseLayer<T>,
    pub upstream: Vec<T>,
}

impl<T: Real> DenseProbe<T> {
    fn unpack(&self, point: &[T]) -> Result<(Vec<T>, DenseLayer<T>)> {
        let n_in = self.input.len();
        let n_w = self.layer.weights().len();
        let layer = DenseLayer::new(
            self.layer.inputs(),
            self.layer.outputs(),
            point[n_in..n_in + n_w].to_vec(),
            point[n_in + n_w..].to_vec(),
        )?;
        Ok((point[..n_in].to_vec(), layer))
    }
}

impl<T: Real> GradientProbe<T> for DenseProbe<T> {
    fn point(&self) -> Vec<T> {
        [self.input.as_slice(), self.layer.weights(), self.layer.bias()].concat()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let (x, layer) = self.unpack(point)?;
        let y = dense_forward(&x, &layer)?;
        Ok(Probe {
            loss: weighted_sum(&y, &self.upstream),
            pattern: 0,
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        let (x, layer) = self.unpack(point)?;
        let g = dense_backward(&x, &layer, &self.upstream)?;
        Ok([g.input_grad, g.weight_grad, g.bias_grad].concat())
    }
}

/// ReLU under the linear loss `Σ u ⊙ relu(x)`.
#[derive(Debug, Clone)]
pub struct ReluProbe<T> {
    pub input: FeatureMap<T>,
    pub upstream: FeatureMap<T>,
}

impl<T: Real> GradientProbe<T> for ReluProbe<T> {
    fn point(&self) -> Vec<T> {
        self.input.data().to_vec()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let x = FeatureMap::new(self.input.channels(), self.input.frames(), point.to_vec())?;
        Ok(Probe {
            loss: weighted_sum(relu_forward(&x).data(), self.upstream.data()),
            pattern: fingerprint(point.iter().map(|v| *v > T::zero())),
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        let x = FeatureMap::new(self.input.channels(), self.input.frames(), point.to_vec())?;
        Ok(relu_backward(&x, &self.upstream)?.into_data())
    }
}

/// Max pooling under the linear loss `Σ u ⊙ pool(x)`.
#[derive(Debug, Clone)]
pub struct MaxPoolProbe<T> {
    pub input: FeatureMap<T>,
    pub pool: usize,
    pub stride: usize,
    pub upstream: FeatureMap<T>,
}

impl<T: Real> GradientProbe<T> for MaxPoolProbe<T> {
    fn point(&self) -> Vec<T> {
        self.input.data().to_vec()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let x = FeatureMap::new(self.input.channels(), self.input.frames(), point.to_vec())?;
        let out = maxpool1d_forward(&x, self.pool, self.stride)?;
        Ok(Probe {
            loss: weighted_sum(out.output.data(), self.upstream.data()),
            pattern: fingerprint(&out.argmax),
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        let x = FeatureMap::new(self.input.channels(), self.input.frames(), point.to_vec())?;
        let out = maxpool1d_forward(&x, self.pool, self.stride)?;
        Ok(maxpool1d_backward(x.channels(), x.frames(), &out.argmax, &self.upstream)?.into_data())
    }
}

/// Training-mode batchnorm under the linear loss `Σ u ⊙ bn(rows)`.
/// Coordinates: rows, then gamma, then beta.
#[derive(Debug, Clone)]
pub struct BatchNormProbe<T> {
    pub rows: Vec<T>,
    pub params: BatchNormParams<T>,
    pub upstream: Vec<T>,
}

impl<T: Real> BatchNormProbe<T> {
    fn unpack(&self, point: &[T]) -> (Vec<T>, BatchNormParams<T>) {
        let n = self.rows.len();
        let f = self.params.features();
        let mut params = self.params.clone();
        params.gamma = point[n..n + f].to_vec();
        params.beta = point[n + f..].to_vec();
        (point[..n].to_vec(), params)
    }
}

impl<T: Real> GradientProbe<T> for BatchNormProbe<T> {
    fn point(&self) -> Vec<T> {
        [self.rows.as_slice(), &self.params.gamma, &self.params.beta].concat()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let (rows, params) = self.unpack(point);
        let out = batchnorm_train(&rows, &params)?;
        Ok(Probe {
            loss: weighted_sum(&out.output, &self.upstream),
            pattern: 0,
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        let (rows, params) = self.unpack(point);
        let out = batchnorm_train(&rows, &params)?;
        let g = batchnorm_backward(&out.cache, &params, &self.upstream)?;
        Ok([g.input_grad, g.gamma_grad, g.beta_grad].concat())
    }
}

/// Softmax followed by mean categorical cross-entropy; coordinates are the logits.
#[derive(Debug, Clone)]
pub struct SoftmaxCceProbe<T> {
    pub logits: Vec<Vec<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> SoftmaxCceProbe<T> {
    fn probs(&self, point: &[T]) -> Result<Vec<Vec<T>>> {
        let k = self.logits.first().map_or(0, Vec::len);
        point.chunks(k.max(1)).map(softmax).collect()
    }
}

impl<T: Real> GradientProbe<T> for SoftmaxCceProbe<T> {
    fn point(&self) -> Vec<T> {
        self.logits.concat()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let probs = self.probs(point)?;
        Ok(Probe {
            loss: categorical_cross_entropy_labels(&probs, &self.labels)?.value,
            pattern: 0,
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        let probs = self.probs(point)?;
        Ok(softmax_cce_backward(&probs, &self.labels)?.concat())
    }
}
