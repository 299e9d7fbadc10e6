//! Confusion matrices and per-class precision, recall and F1.

use crate::{Error, Result};

/// `K × K` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

pub fn confusion_matrix(truths: &[usize], preds: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truths.len() != preds.len() {
        return Err(Error::Input(format!(
            "{} true labels but {} predictions",
            truths.len(),
            preds.len()
        )));
    }
    let mut m = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truths.iter().zip(preds) {
        if t >= classes || p >= classes {
            return Err(Error::Input(format!("label pair ({t}, {p}) out of range for {classes} classes")));
        }
        m.counts[t * classes + p] += 1;
    }
    Ok(m)
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from explicit rows.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Dimension("confusion matrix rows must be square".into()));
        }
        Ok(Self {
            classes,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of the diagonal.
    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.count(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Samples per true class.
    pub fn supports(&self) -> Vec<u64> {
        (0..self.classes).map(|k| self.row(k).iter().sum()).collect()
    }

    /// Samples per predicted class.
    pub fn predicted(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|p| (0..self.classes).map(|t| self.count(t, p)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the three ratios was 0/0 and reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of the per-class F1 scores.
    pub macro_f1: f64,
}

fn ratio(num: f64, den: f64, undefined: &mut bool) -> f64 {
    if den == 0.0 {
        *undefined = true;
        0.0
    } else {
        num / den
    }
}

pub fn class_metrics(matrix: &ConfusionMatrix) -> MetricSummary {
    let supports = matrix.supports();
    let predicted = matrix.predicted();
    let per_class: Vec<ClassMetrics> = (0..matrix.classes())
        .map(|k| {
            let tp = matrix.count(k, k) as f64;
            let mut undefined = false;
            let precision = ratio(tp, predicted[k] as f64, &mut undefined);
            let recall = ratio(tp, supports[k] as f64, &mut undefined);
            let f1 = ratio(2.0 * precision * recall, precision + recall, &mut undefined);
            ClassMetrics {
                precision,
                recall,
                f1,
                support: supports[k],
                undefined,
            }
        })
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|m| m.f1).sum::<f64>() / per_class.len() as f64
    };
    MetricSummary { per_class, macro_f1 }
}

/// Macro-F1 straight from label vectors.
pub fn macro_f1(truths: &[usize], preds: &[usize], classes: usize) -> Result<f64> {
    Ok(class_metrics(&confusion_matrix(truths, preds, classes)?).macro_f1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_example() {
        let m = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(m, ConfusionMatrix::from_rows(&[vec![1, 1], vec![0, 2]]).unwrap());
        assert_eq!(m.correct(), 3);
        assert_eq!(m.accuracy(), 0.75);
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = [0, 1, 2, 2, 1];
        let m = confusion_matrix(&labels, &labels, 3).unwrap();
        assert_eq!(m.supports(), vec![1, 2, 2]);
        assert_eq!(m.correct(), 5);
        assert_eq!(class_metrics(&m).macro_f1, 1.0);
    }

    #[test]
    fn empty_inputs_give_zero_matrix() {
        let m = confusion_matrix(&[], &[], 3).unwrap();
        assert_eq!(m, ConfusionMatrix::zeros(3));
        assert_eq!(m.total(), 0);
    }

    #[test]
    fn out_of_range_label() {
        assert!(confusion_matrix(&[2], &[0], 2).is_err());
        assert!(confusion_matrix(&[0, 1], &[0], 2).is_err());
    }

    #[test]
    fn worked_two_class_metrics() {
        let m = ConfusionMatrix::from_rows(&[vec![1, 1], vec![0, 2]]).unwrap();
        let s = class_metrics(&m);
        assert!((s.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((s.macro_f1 - 0.733333).abs() < 1e-4);
    }

    #[test]
    fn absent_class_scores_zero_and_is_flagged() {
        let m = confusion_matrix(&[0, 1], &[0, 1], 3).unwrap();
        let s = class_metrics(&m);
        assert_eq!(s.per_class[2].f1, 0.0);
        assert!(s.per_class[2].undefined);
        assert!(!s.per_class[0].undefined);
        assert!((s.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_classifier_recalls_one_class() {
        let truths = [0, 1, 2, 0, 1, 2];
        let m = confusion_matrix(&truths, &[1; 6], 3).unwrap();
        let s = class_metrics(&m);
        assert_eq!(s.per_class[1].recall, 1.0);
        assert_eq!(s.per_class[0].recall, 0.0);
        assert_eq!(s.per_class[2].recall, 0.0);
    }
}
