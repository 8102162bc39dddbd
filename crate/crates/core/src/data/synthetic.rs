//! Synthetic dataset generation with controllable second moments.
//!
//! Feature `i` is drawn from `Normal(0, s_i)` so that `E[x_i^2] = s_i`
//! matches the requested profile. Labels follow a hidden linear rule
//! `y = sign(w_true . x + noise)`, with the noise scale expressed relative
//! to the standard deviation of the clean margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::vector::FeatureVec;

/// Target second moments per feature.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentProfile {
    /// `s_i = 10^u`, `u` uniform over `[log10 lo, log10 hi]`.
    LogUniform { lo: f64, hi: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub count: usize,
    pub profile: MomentProfile,
    /// Label noise std relative to the clean margin std.
    pub relative_noise: f64,
    pub seed: u64,
}

/// Generates a dataset; identical spec gives identical bytes.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.dim == 0 || spec.count == 0 {
        return Err(Error::InvalidConfig(
            "synthetic dataset needs dim >= 1 and count >= 1".into(),
        ));
    }
    if !(spec.relative_noise >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "relative noise must be non-negative, got {}",
            spec.relative_noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let moments: Vec<f64> = match &spec.profile {
        MomentProfile::LogUniform { lo, hi } => {
            if !(*lo > 0.0 && hi >= lo) {
                return Err(Error::InvalidConfig(format!(
                    "log-uniform range needs 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
            let (llo, lhi) = (lo.log10(), hi.log10());
            (0..spec.dim)
                .map(|_| 10f64.powf(llo + rng.random::<f64>() * (lhi - llo)))
                .collect()
        }
        MomentProfile::Explicit(v) => {
            if v.len() != spec.dim {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|&s| !(s >= 0.0)) {
                return Err(Error::InvalidConfig(
                    "explicit moments must be non-negative".into(),
                ));
            }
            v.clone()
        }
    };

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let w_true: Vec<f64> = (0..spec.dim).map(|_| unit.sample(&mut rng)).collect();
    let margin_var: f64 = w_true
        .iter()
        .zip(&moments)
        .map(|(w, s)| w * w * s)
        .sum();
    let noise_std = spec.relative_noise * margin_var.sqrt();
    let stds: Vec<f64> = moments.iter().map(|s| s.sqrt()).collect();

    let examples = (0..spec.count)
        .map(|_| {
            let x: Vec<f64> = stds.iter().map(|sd| sd * unit.sample(&mut rng)).collect();
            let margin: f64 = w_true.iter().zip(&x).map(|(w, v)| w * v).sum();
            let noisy = margin + noise_std * unit.sample(&mut rng);
            Example {
                features: FeatureVec::Dense(x),
                label: if noisy > 0.0 { 1 } else { -1 },
            }
        })
        .collect();
    Dataset::new(examples, spec.dim)
}
