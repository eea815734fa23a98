//! Dense vector arithmetic shared by k-means, the K-tree and NMF.
//!
//! Everything here works in `f64`. Functions that take two vectors check that
//! the dimensions agree and return [`Error::DimensionMismatch`] otherwise.

use std::ops::Deref;

use crate::error::{Error, Result};

/// A fixed-dimension vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot_slices(&self.0, &self.0).sqrt()
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        check_dims(self, other)?;
        Ok(dot_slices(&self.0, &other.0))
    }

    /// Folds `v` into a running mean that currently summarises `count`
    /// vectors: `μ ← μ + (v − μ)/(count + 1)`.
    pub fn update_mean(&mut self, v: &DenseVector, count: usize) -> Result<()> {
        check_dims(self, v)?;
        let inv = 1.0 / (count as f64 + 1.0);
        for (m, x) in self.0.iter_mut().zip(&v.0) {
            *m += (x - *m) * inv;
        }
        Ok(())
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for DenseVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

fn check_dims(a: &DenseVector, b: &DenseVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance without the dimension check; callers guarantee
/// equal lengths.
#[inline]
pub(crate) fn squared_distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn squared_euclidean(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(squared_distance_unchecked(a, b))
}

pub fn euclidean(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    squared_euclidean(a, b).map(f64::sqrt)
}

/// Cosine similarity. Either argument having zero norm is an error; the
/// caller picks the fallback.
pub fn cosine(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    check_dims(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot_slices(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `(Σ wᵢ·vᵢ) / Σ wᵢ`.
pub fn weighted_mean(vectors: &[DenseVector], weights: &[f64]) -> Result<DenseVector> {
    let first = vectors
        .first()
        .ok_or(Error::Empty("weighted_mean vectors"))?;
    if vectors.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} vectors but {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidArgument(
            "weights must sum to a positive value".into(),
        ));
    }
    let mut acc = vec![0.0; first.dim()];
    for (v, &w) in vectors.iter().zip(weights) {
        check_dims(first, v)?;
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += w * x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    DenseVector::new(acc)
}

pub fn unit_normalize(a: &DenseVector) -> Result<DenseVector> {
    let n = a.norm();
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(DenseVector(a.iter().map(|x| x / n).collect()))
}
