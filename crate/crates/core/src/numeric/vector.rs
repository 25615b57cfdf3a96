use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::NumericError;

/// Flat real-valued vector holding model parameters or parameter deltas.
///
/// The dimension is fixed at construction. Arithmetic between vectors of
/// different dimension is rejected rather than truncated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Wraps `values`, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self, NumericError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(NumericError::NonFinite { index });
        }
        Ok(Self(values))
    }

    /// Wraps `values` without the finiteness check. Callers that produce
    /// values from arithmetic should follow up with [`ParamVector::check_finite`].
    pub fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<(), NumericError> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(NumericError::NonFinite { index }),
            None => Ok(()),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<(), NumericError> {
        if self.dim() != other.dim() {
            return Err(NumericError::Dimension {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericError> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NumericError> {
        self.check_dim(other)?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self + factor * other`
    pub fn axpy(&self, factor: f64, other: &Self) -> Result<Self, NumericError> {
        self.check_dim(other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        ))
    }

    pub fn dot(&self, other: &Self) -> Result<f64, NumericError> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest coordinate-wise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, NumericError> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Coordinate-wise sum of equally sized vectors, accumulated in input order.
    pub fn sum_all(vectors: &[ParamVector]) -> Result<Self, NumericError> {
        let first = vectors.first().ok_or(NumericError::Empty)?;
        let mut acc = Self::zeros(first.dim());
        for v in vectors {
            acc.check_dim(v)?;
            for (a, b) in acc.0.iter_mut().zip(&v.0) {
                *a += b;
            }
        }
        Ok(acc)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, index: usize) -> &mut f64 {
        &mut self.0[index]
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Self {
        v.0
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
