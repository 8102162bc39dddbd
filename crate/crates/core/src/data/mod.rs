//! Dataset ingestion, synthetic generation and normalization.
//!
//! Labeled examples carry dense or sparse feature vectors. Per-feature
//! means and uncentered second moments are computed once at construction
//! with compensated sums; the second moments drive the data-dependent
//! sampling probabilities, so they are always means of squares, never
//! variances.

mod idx;
mod sparse_text;
mod synthetic;

pub use idx::{read_idx, write_idx_images, write_idx_labels, IMAGES_MAGIC, LABELS_MAGIC};
pub use sparse_text::{read_sparse_text, write_sparse_text};
pub use synthetic::{gen_synthetic, MomentProfile, SyntheticSpec};

use ndarray::Array2;

use crate::dropout::SecondMoments;
use crate::error::{Error, Result};
use crate::vector::{FeatureVec, KahanSum};

/// One labeled example. Shallow training uses labels in `{-1, +1}`;
/// multi-class training uses `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureVec,
    pub label: i32,
}

/// A labeled dataset with cached per-feature statistics.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
    dim: usize,
    moments: SecondMoments,
    means: Vec<f64>,
}

impl Dataset {
    /// Validates feature indices against `dim` and caches the statistics.
    pub fn new(examples: Vec<Example>, dim: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dataset dimension is zero".into()));
        }
        for ex in &examples {
            if let Some(max) = ex.features.max_index() {
                if max >= dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: max + 1,
                    });
                }
            }
        }
        let (means, moments) = feature_statistics(&examples, dim);
        Ok(Self {
            examples,
            dim,
            moments: SecondMoments::new(moments)?,
            means,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    /// Cached uncentered second moments `E[x_i^2]`.
    pub fn second_moments(&self) -> &SecondMoments {
        &self.moments
    }

    /// Cached per-feature means.
    pub fn feature_means(&self) -> &[f64] {
        &self.means
    }

    /// Labels as `{-1, +1}` reals; errors on anything else.
    pub fn binary_labels(&self) -> Result<Vec<f64>> {
        self.examples
            .iter()
            .map(|ex| match ex.label {
                1 => Ok(1.0),
                -1 => Ok(-1.0),
                other => Err(Error::InvalidConfig(format!(
                    "binary training needs labels in {{-1,+1}}, found {other}"
                ))),
            })
            .collect()
    }

    /// Densifies into a row-major matrix plus the label column.
    pub fn to_dense_matrix(&self) -> (Array2<f64>, Vec<i32>) {
        let mut m = Array2::zeros((self.len(), self.dim));
        for (r, ex) in self.examples.iter().enumerate() {
            for (i, v) in ex.features.iter_entries() {
                m[(r, i)] = v;
            }
        }
        (m, self.examples.iter().map(|e| e.label).collect())
    }
}

fn feature_statistics(examples: &[Example], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean_acc = vec![KahanSum::new(); dim];
    let mut sq_acc = vec![KahanSum::new(); dim];
    for ex in examples {
        for (i, v) in ex.features.iter_entries() {
            mean_acc[i].add(v);
            sq_acc[i].add(v * v);
        }
    }
    let n = examples.len() as f64;
    (
        mean_acc.into_iter().map(|a| a.value() / n).collect(),
        sq_acc.into_iter().map(|a| a.value() / n).collect(),
    )
}

/// Floor applied to per-feature standard deviations before dividing.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-feature centering and scaling statistics fitted on one (training)
/// split and applied identically to every split.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl NormalizationStats {
    /// Fits means and population standard deviations on `source`.
    pub fn fit(source: &Dataset) -> Self {
        let mean = source.feature_means().to_vec();
        let std = source
            .second_moments()
            .values()
            .iter()
            .zip(&mean)
            .map(|(&sq, &mu)| (sq - mu * mu).max(0.0).sqrt().max(STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Applies `(x - mean) / std` per feature. Centering densifies sparse
    /// examples, so the output is always dense.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: data.dim(),
            });
        }
        let examples = data
            .examples()
            .iter()
            .map(|ex| {
                let dense = ex.features.to_dense(data.dim());
                let transformed: Vec<f64> = dense
                    .iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(&v, (&mu, &sd))| (v - mu) / sd)
                    .collect();
                Example {
                    features: FeatureVec::Dense(transformed),
                    label: ex.label,
                }
            })
            .collect();
        Dataset::new(examples, data.dim())
    }
}

/// Fits stats on `source` and applies them to `data`.
pub fn z_normalize(data: &Dataset, source: &Dataset) -> Result<(Dataset, NormalizationStats)> {
    let stats = NormalizationStats::fit(source);
    Ok((stats.apply(data)?, stats))
}
