//! Evaluation metrics: accuracy from confusion counts, Dice overlap and recall
//! for binary masks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("metric is undefined on empty input: {0}")]
    Empty(&'static str),

    #[error("mask shapes differ: {left:?} vs {right:?}")]
    Shape { left: Vec<usize>, right: Vec<usize> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    /// Counts for binary predictions, treating `true` as the positive class.
    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> Self {
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// `(TP + TN) / (TP + TN + FP + FN)`
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    let total = c.total();
    if total == 0 {
        return Err(MetricsError::Empty("accuracy needs at least one sample"));
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

/// Fraction of exact matches between predicted and true class indices.
pub fn multiclass_accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64, MetricsError> {
    if truth.is_empty() {
        return Err(MetricsError::Empty("accuracy needs at least one sample"));
    }
    if truth.len() != predicted.len() {
        return Err(MetricsError::Shape {
            left: vec![truth.len()],
            right: vec![predicted.len()],
        });
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Flat boolean mask with a declared shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    shape: Vec<usize>,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Vec<usize>, values: Vec<bool>) -> Result<Self, MetricsError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(MetricsError::Shape {
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Self { shape, values })
    }

    /// One-dimensional mask.
    pub fn flat(values: Vec<bool>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    fn intersection(&self, other: &Self) -> Result<usize, MetricsError> {
        if self.shape != other.shape {
            return Err(MetricsError::Shape {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| **a && **b)
            .count())
    }
}

/// `2|Y ∩ Y'| / (|Y| + |Y'|)`. Two empty masks are an error rather than a
/// perfect score.
pub fn dice(truth: &BinaryMask, predicted: &BinaryMask) -> Result<f64, MetricsError> {
    let overlap = truth.intersection(predicted)?;
    let denom = truth.count() + predicted.count();
    if denom == 0 {
        return Err(MetricsError::Empty("dice of two empty masks"));
    }
    Ok(2.0 * overlap as f64 / denom as f64)
}

/// `|Y ∩ Y'| / |Y|`
pub fn recall(truth: &BinaryMask, predicted: &BinaryMask) -> Result<f64, MetricsError> {
    let overlap = truth.intersection(predicted)?;
    let positives = truth.count();
    if positives == 0 {
        return Err(MetricsError::Empty("recall with empty ground truth"));
    }
    Ok(overlap as f64 / positives as f64)
}
