//! Monte Carlo oracles for the closed forms.
//!
//! Each estimator draws `(x, eps)` pairs — `x` uniformly from a data sample,
//! `eps` from the mask law — and reports a mean with its standard error.
//! Agreement tests use 4-standard-error bands (false-failure rate below
//! 1e-4 per check).

use ndarray::Array2;
use rand::Rng;

use crate::dropout::{sample_mask, MaskLaw, SamplingDistribution};
use crate::error::{Error, Result};
use crate::theory::{EstimateMethod, RegularizerEstimate};

/// Streaming mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n-1 denominator); zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

fn validate_sample(sample: &[Vec<f64>], dim: usize) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for x in sample {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
    }
    Ok(())
}

/// Monte Carlo estimate of `E ||x ∘ eps||^2` over the sample and the
/// multinomial mask law.
pub fn expected_masked_sqnorm_mc<R: Rng + ?Sized>(
    sample: &[Vec<f64>],
    dist: &SamplingDistribution,
    trials: u64,
    rng: &mut R,
) -> Result<RegularizerEstimate> {
    if trials == 0 {
        return Err(Error::ZeroTrialCount);
    }
    validate_sample(sample, dist.dim())?;
    let mut stats = RunningMoments::default();
    for _ in 0..trials {
        let x = &sample[rng.random_range(0..sample.len())];
        let mask = sample_mask(dist, rng);
        let sq: f64 = x
            .iter()
            .zip(mask.scale())
            .map(|(xi, s)| {
                let v = xi * s;
                v * v
            })
            .sum();
        stats.push(sq);
    }
    Ok(RegularizerEstimate {
        value: stats.mean(),
        standard_error: stats.standard_error(),
        method: EstimateMethod::MonteCarlo,
    })
}

/// `log(2 cosh(u))`, overflow-safe.
fn log_two_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// Monte Carlo estimate of the dropout regularizer for logistic loss:
/// the expected log-partition gap
/// `E[ log( cosh(w^T (x∘eps) / 2) / cosh(w^T x / 2) ) ]`.
///
/// Non-negative in expectation (Jensen); individual draws may be negative.
pub fn dropout_regularizer_mc<R: Rng + ?Sized>(
    w: &[f64],
    sample: &[Vec<f64>],
    law: &MaskLaw,
    trials: u64,
    rng: &mut R,
) -> Result<RegularizerEstimate> {
    if trials == 0 {
        return Err(Error::ZeroTrialCount);
    }
    validate_sample(sample, w.len())?;
    let mut stats = RunningMoments::default();
    for _ in 0..trials {
        let x = &sample[rng.random_range(0..sample.len())];
        let scales = law.sample_scales(w.len(), rng)?;
        let masked_margin: f64 = w
            .iter()
            .zip(x.iter().zip(&scales))
            .map(|(wi, (xi, s))| wi * xi * s)
            .sum();
        let clean_margin: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
        stats.push(log_two_cosh(masked_margin / 2.0) - log_two_cosh(clean_margin / 2.0));
    }
    Ok(RegularizerEstimate {
        value: stats.mean(),
        standard_error: stats.standard_error(),
        method: EstimateMethod::MonteCarlo,
    })
}

/// Empirical covariance of `x ∘ eps` with the known mean `E[x ∘ eps] = x`,
/// entry by entry, plus the standard error of every entry.
pub fn mask_covariance_mc<R: Rng + ?Sized>(
    x: &[f64],
    dist: &SamplingDistribution,
    trials: u64,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if trials == 0 {
        return Err(Error::ZeroTrialCount);
    }
    let d = dist.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let mut stats = vec![RunningMoments::default(); d * d];
    let mut dev = vec![0.0; d];
    for _ in 0..trials {
        let mask = sample_mask(dist, rng);
        for i in 0..d {
            dev[i] = x[i] * mask.scale()[i] - x[i];
        }
        for i in 0..d {
            for j in 0..d {
                stats[i * d + j].push(dev[i] * dev[j]);
            }
        }
    }
    let mean = Array2::from_shape_fn((d, d), |(i, j)| stats[i * d + j].mean());
    let se = Array2::from_shape_fn((d, d), |(i, j)| stats[i * d + j].standard_error());
    Ok((mean, se))
}
