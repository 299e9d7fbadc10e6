use super::Real;
use crate::{Error, Result};

/// Probabilities are clamped to at least this value before taking logarithms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Mean loss over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub batch_size: usize,
}

pub fn one_hot<T: Real>(label: usize, classes: usize) -> Vec<T> {
    let mut row = vec![T::zero(); classes];
    row[label] = T::one();
    row
}

/// `−(1/M) Σ_m Σ_k y_m^k · ln p_m^k` over one-hot targets.
pub fn categorical_cross_entropy<T: Real>(probs: &[Vec<T>], targets: &[Vec<T>]) -> Result<LossValue> {
    if probs.len() != targets.len() {
        return Err(Error::Input(format!(
            "{} probability rows but {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let mut labels = Vec::with_capacity(targets.len());
    for (m, target) in targets.iter().enumerate() {
        let mut hot = None;
        for (k, v) in target.iter().enumerate() {
            let v = v.as_f64();
            if v == 1.0 && hot.is_none() {
                hot = Some(k);
            } else if v != 0.0 {
                return Err(Error::Input(format!("target row {m} is not one-hot")));
            }
        }
        labels.push(hot.ok_or_else(|| Error::Input(format!("target row {m} is not one-hot")))?);
    }
    categorical_cross_entropy_labels(probs, &labels)
}

/// Categorical cross-entropy with targets given as class indices.
pub fn categorical_cross_entropy_labels<T: Real>(probs: &[Vec<T>], labels: &[usize]) -> Result<LossValue> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Input(format!(
            "{} probability rows but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let classes = probs[0].len();
    if classes < 2 {
        return Err(Error::Input(format!("need at least 2 classes, got {classes}")));
    }
    let mut total = 0.0f64;
    for (m, (row, &label)) in probs.iter().zip(labels).enumerate() {
        if row.len() != classes {
            return Err(Error::Input(format!("probability row {m} has {} entries, expected {classes}", row.len())));
        }
        if label >= classes {
            return Err(Error::Input(format!("label {label} out of range for {classes} classes")));
        }
        let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Input(format!("probability row {m} sums to {sum}")));
        }
        total -= row[label].as_f64().clamp(PROBABILITY_FLOOR, 1.0).ln();
    }
    Ok(LossValue {
        value: total / probs.len() as f64,
        batch_size: probs.len(),
    })
}

/// `−(1/M) Σ_m [y_m ln h_m + (1 − y_m) ln(1 − h_m)]`
pub fn binary_cross_entropy<T: Real>(probs: &[T], targets: &[T]) -> Result<LossValue> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(Error::Input(format!(
            "{} probabilities but {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let mut total = 0.0f64;
    for (h, y) in probs.iter().zip(targets) {
        let y = y.as_f64();
        if y != 0.0 && y != 1.0 {
            return Err(Error::Input(format!("binary target must be 0 or 1, got {y}")));
        }
        let h = h.as_f64().clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        total -= y * h.ln() + (1.0 - y) * (1.0 - h).ln();
    }
    Ok(LossValue {
        value: total / probs.len() as f64,
        batch_size: probs.len(),
    })
}

/// Gradient of softmax followed by mean categorical cross-entropy with
/// respect to the logits: `(p − onehot) / M`.
pub fn softmax_cce_backward<T: Real>(probs: &[Vec<T>], labels: &[usize]) -> Result<Vec<Vec<T>>> {
    if probs.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} probability rows but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let m = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(row, &label)| {
            if label >= row.len() {
                return Err(Error::Input(format!("label {label} out of range for {} classes", row.len())));
            }
            Ok(row
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let target = if k == label { 1.0 } else { 0.0 };
                    T::of((p.as_f64() - target) / m)
                })
                .collect())
        })
        .collect()
}
