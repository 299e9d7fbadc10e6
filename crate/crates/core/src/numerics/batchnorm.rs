//! Batch normalization over a set of equal-length vectors.
//!
//! Inputs are row-major `rows × features` slices. Statistics are
//! accumulated in `f64` regardless of the element type.

use super::Real;
use crate::{Error, Result};

pub const BATCHNORM_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in the moving average.
pub const BATCHNORM_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormParams<T> {
    /// Unit scale, zero shift, running statistics of the standard normal.
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![T::one(); features],
            beta: vec![T::zero(); features],
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn cast<U: Real>(&self) -> BatchNormParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        BatchNormParams {
            gamma: c(&self.gamma),
            beta: c(&self.beta),
            running_mean: c(&self.running_mean),
            running_var: c(&self.running_var),
        }
    }
}

/// Values saved by a training-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    features: usize,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormTrainOutput<T> {
    pub output: Vec<T>,
    pub cache: BatchNormCache,
    /// Running statistics after this batch's moving-average update.
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Batch statistics used for normalization.
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T> {
    pub input_grad: Vec<T>,
    pub gamma_grad: Vec<T>,
    pub beta_grad: Vec<T>,
}

fn row_count<T: Real>(rows: &[T], params: &BatchNormParams<T>) -> Result<usize> {
    let features = params.features();
    if features == 0 || !rows.len().is_multiple_of(features) {
        return Err(Error::Dimension(format!(
            "batchnorm over {features} features cannot take {} values",
            rows.len()
        )));
    }
    if params.beta.len() != features
        || params.running_mean.len() != features
        || params.running_var.len() != features
    {
        return Err(Error::Dimension("batchnorm parameter vectors differ in length".into()));
    }
    Ok(rows.len() / features)
}

/// Normalizes with batch statistics and advances the running statistics.
pub fn batchnorm_train<T: Real>(rows: &[T], params: &BatchNormParams<T>) -> Result<BatchNormTrainOutput<T>> {
    let n = row_count(rows, params)?;
    if n < 2 {
        return Err(Error::DegenerateBatch(format!(
            "training-mode batchnorm needs at least 2 vectors, got {n}"
        )));
    }
    let features = params.features();
    let mut mean = vec![0.0f64; features];
    for row in rows.chunks_exact(features) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0f64; features];
    for row in rows.chunks_exact(features) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCHNORM_EPSILON).sqrt()).collect();

    let mut normalized = Vec::with_capacity(rows.len());
    let mut output = Vec::with_capacity(rows.len());
    for row in rows.chunks_exact(features) {
        for (f, v) in row.iter().enumerate() {
            let xhat = (v.as_f64() - mean[f]) * inv_std[f];
            normalized.push(xhat);
            output.push(T::of(params.gamma[f].as_f64() * xhat + params.beta[f].as_f64()));
        }
    }
    let blend = |running: &[T], batch: &[f64]| -> Vec<T> {
        running
            .iter()
            .zip(batch)
            .map(|(r, b)| T::of(BATCHNORM_MOMENTUM * r.as_f64() + (1.0 - BATCHNORM_MOMENTUM) * b))
            .collect()
    };
    Ok(BatchNormTrainOutput {
        output,
        running_mean: blend(&params.running_mean, &mean),
        running_var: blend(&params.running_var, &var),
        cache: BatchNormCache {
            features,
            normalized,
            inv_std,
        },
        batch_mean: mean,
        batch_var: var,
    })
}

/// Normalizes with the running statistics.
pub fn batchnorm_infer<T: Real>(rows: &[T], params: &BatchNormParams<T>) -> Result<Vec<T>> {
    row_count(rows, params)?;
    let features = params.features();
    let scale: Vec<f64> = (0..features)
        .map(|f| params.gamma[f].as_f64() / (params.running_var[f].as_f64() + BATCHNORM_EPSILON).sqrt())
        .collect();
    Ok(rows
        .chunks_exact(features)
        .flat_map(|row| {
            row.iter().enumerate().map(|(f, v)| {
                T::of((v.as_f64() - params.running_mean[f].as_f64()) * scale[f] + params.beta[f].as_f64())
            })
        })
        .collect())
}

/// Exact gradients of a training-mode batchnorm.
pub fn batchnorm_backward<T: Real>(
    cache: &BatchNormCache,
    params: &BatchNormParams<T>,
    upstream: &[T],
) -> Result<BatchNormGrads<T>> {
    let features = cache.features;
    if upstream.len() != cache.normalized.len() || params.features() != features {
        return Err(Error::Dimension(format!(
            "batchnorm backward expects {} upstream values, got {}",
            cache.normalized.len(),
            upstream.len()
        )));
    }
    let n = (upstream.len() / features) as f64;
    let mut sum_g = vec![0.0f64; features];
    let mut sum_gx = vec![0.0f64; features];
    for (g_row, x_row) in upstream.chunks_exact(features).zip(cache.normalized.chunks_exact(features)) {
        for f in 0..features {
            let g = g_row[f].as_f64();
            sum_g[f] += g;
            sum_gx[f] += g * x_row[f];
        }
    }
    let mut input_grad = Vec::with_capacity(upstream.len());
    for (g_row, x_row) in upstream.chunks_exact(features).zip(cache.normalized.chunks_exact(features)) {
        for f in 0..features {
            let k = params.gamma[f].as_f64() * cache.inv_std[f] / n;
            input_grad.push(T::of(k * (n * g_row[f].as_f64() - sum_g[f] - x_row[f] * sum_gx[f])));
        }
    }
    Ok(BatchNormGrads {
        input_grad,
        gamma_grad: sum_gx.into_iter().map(T::of).collect(),
        beta_grad: sum_g.into_iter().map(T::of).collect(),
    })
}
