//! Feature vectors that stay sparse through masking, plus compensated sums.

use crate::error::{Error, Result};

/// Kahan-compensated running sum. Keeps the accumulated error at a few ulps
/// regardless of the number of terms, which the simplex-sum invariants rely on.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator of terms.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// A feature vector, dense or sparse. Sparse vectors store strictly
/// increasing zero-based indices paired with values; the dimension is
/// carried by the containing dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVec {
    Dense(Vec<f64>),
    Sparse { indices: Vec<usize>, values: Vec<f64> },
}

impl FeatureVec {
    /// Builds a sparse vector, validating the index order.
    pub fn sparse(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                got: values.len(),
            });
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        Ok(FeatureVec::Sparse { indices, values })
    }

    /// Number of stored entries (all of them for dense vectors).
    pub fn nnz(&self) -> usize {
        match self {
            FeatureVec::Dense(v) => v.len(),
            FeatureVec::Sparse { indices, .. } => indices.len(),
        }
    }

    /// Largest index with a stored entry.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            FeatureVec::Dense(v) => v.len().checked_sub(1),
            FeatureVec::Sparse { indices, .. } => indices.last().copied(),
        }
    }

    /// Iterates over stored `(index, value)` pairs.
    pub fn iter_entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match self {
            FeatureVec::Dense(v) => Box::new(v.iter().copied().enumerate()),
            FeatureVec::Sparse { indices, values } => Box::new(
                indices
                    .iter()
                    .copied()
                    .zip(values.iter().copied()),
            ),
        }
    }

    /// Inner product with a dense weight vector.
    pub fn dot(&self, w: &[f64]) -> f64 {
        match self {
            FeatureVec::Dense(v) => v.iter().zip(w).map(|(a, b)| a * b).sum(),
            FeatureVec::Sparse { indices, values } => indices
                .iter()
                .zip(values)
                .map(|(&i, &v)| v * w[i])
                .sum(),
        }
    }

    /// Squared Euclidean norm.
    pub fn sqnorm(&self) -> f64 {
        match self {
            FeatureVec::Dense(v) => v.iter().map(|a| a * a).sum(),
            FeatureVec::Sparse { values, .. } => values.iter().map(|a| a * a).sum(),
        }
    }

    /// Materializes as a dense vector of dimension `dim`.
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        match self {
            FeatureVec::Dense(v) => {
                let mut out = v.clone();
                out.resize(dim, 0.0);
                out
            }
            FeatureVec::Sparse { indices, values } => {
                let mut out = vec![0.0; dim];
                for (&i, &v) in indices.iter().zip(values) {
                    out[i] = v;
                }
                out
            }
        }
    }
}
