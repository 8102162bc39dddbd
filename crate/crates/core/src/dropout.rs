//! Dropout samplers and sampling-probability estimators.
//!
//! Three mask laws are implemented:
//! - standard dropout: i.i.d. Bernoulli keep/drop with drop probability
//!   `delta`, kept coordinates scaled by `1/(1-delta)`;
//! - multinomial dropout: counts `m ~ Mult(p_1..p_d; k)` with scale
//!   `eps_i = m_i / (k p_i)`, so coordinates compete for `k` selection slots;
//! - data-dependent / per-minibatch variants where `p_i` is proportional to
//!   the square root of the feature's uncentered second moment.
//!
//! All samplers are pure given an explicit random source; every mean-one
//! scaling keeps masked vectors unbiased: `E[x ∘ eps] = x`.

use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::vector::{kahan_sum, FeatureVec, KahanSum};

/// Absolute tolerance on `sum(p) - 1` when validating a simplex vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// A multinomial sampling law: probabilities `p` on the simplex and a trial
/// count `k`. `k > d` is allowed; sampling is with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    probs: Vec<f64>,
    trials: u64,
}

impl SamplingDistribution {
    /// Validates `p >= 0`, `|sum(p) - 1| <= SIMPLEX_TOLERANCE` and `k >= 1`.
    pub fn new(probs: Vec<f64>, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::ZeroTrialCount);
        }
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, &p)| !(p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "p[{i}] = {p} is negative or NaN"
            )));
        }
        let sum = kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs, trials })
    }

    /// Uniform probabilities `1/d` with `k` trials.
    pub fn uniform(dim: usize, trials: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDistribution("zero dimension".into()));
        }
        Self::new(vec![1.0 / dim as f64; dim], trials)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }
}

/// Counts and scale factors of one multinomial dropout draw.
///
/// Invariants: `sum(counts) = k`; `scale_i = counts_i / (k p_i)` where
/// `p_i > 0` and `scale_i = 0` where `p_i = 0`. Scales can exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    counts: Vec<u64>,
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

/// Standard dropout: drop each coordinate independently with probability
/// `delta`, scale kept coordinates by `1/(1-delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardDropoutSpec {
    delta: f64,
}

impl StandardDropoutSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidDropProbability(delta));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Scale applied to kept coordinates.
    pub fn keep_scale(&self) -> f64 {
        1.0 / (1.0 - self.delta)
    }
}

/// Uncentered per-feature second moments `s_i = E[x_i^2]`.
///
/// Always a mean of squares, never a variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    values: Vec<f64>,
}

impl SecondMoments {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty moment vector".into()));
        }
        if let Some((i, &s)) = values.iter().enumerate().find(|(_, &s)| !(s >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "second moment s[{i}] = {s} is negative or NaN"
            )));
        }
        Ok(Self { values })
    }

    /// Column-wise mean of squares of a batch matrix (rows are examples).
    pub fn from_batch(batch: ArrayView2<'_, f64>) -> Result<Self> {
        let (rows, cols) = batch.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut acc = vec![KahanSum::new(); cols];
        for row in batch.rows() {
            for (a, &v) in acc.iter_mut().zip(row.iter()) {
                a.add(v * v);
            }
        }
        let n = rows as f64;
        Self::new(acc.into_iter().map(|a| a.value() / n).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The mask law used by a trainer or a Monte Carlo estimator.
#[derive(Debug, Clone)]
pub enum MaskLaw {
    /// No noise: every scale is 1.
    Identity,
    Standard(StandardDropoutSpec),
    Multinomial(SamplingDistribution),
}

impl MaskLaw {
    /// Draws one scale vector of dimension `dim`.
    pub fn sample_scales<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            MaskLaw::Identity => Ok(vec![1.0; dim]),
            MaskLaw::Standard(spec) => Ok(sample_standard_mask(spec, dim, rng)),
            MaskLaw::Multinomial(dist) => {
                if dist.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: dist.dim(),
                    });
                }
                Ok(sample_mask(dist, rng).scale)
            }
        }
    }
}

/// Normalizes non-negative weights to the simplex in place.
///
/// A compensated sum plus a one-coordinate residual correction keeps the
/// result inside `SIMPLEX_TOLERANCE` at any dimension.
fn normalize_to_simplex(weights: &mut [f64]) -> Result<()> {
    let total = kahan_sum(weights.iter().copied());
    if !(total > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    let residual = 1.0 - kahan_sum(weights.iter().copied());
    let argmax = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    weights[argmax] += residual;
    Ok(())
}

/// One draw of counts from `Mult(p_1..p_d; k)`.
///
/// Uses the conditional-binomial chain: coordinate `i` receives
/// `Binomial(remaining trials, p_i / remaining mass)` selections. O(d) per
/// draw independent of `k`; all remaining trials land on the last coordinate
/// with positive probability so `sum(m) = k` holds exactly.
pub fn sample_multinomial_counts<R: Rng + ?Sized>(
    dist: &SamplingDistribution,
    rng: &mut R,
) -> Vec<u64> {
    let probs = dist.probs();
    let d = probs.len();
    let mut counts = vec![0u64; d];
    let last_positive = match probs.iter().rposition(|&p| p > 0.0) {
        Some(i) => i,
        // All-zero rows are rejected at construction, but stay defensive.
        None => return counts,
    };
    let mut remaining = dist.trials();
    let mut mass = 1.0f64;
    for i in 0..d {
        if remaining == 0 {
            break;
        }
        let p = probs[i];
        if p <= 0.0 {
            continue;
        }
        if i == last_positive {
            counts[i] = remaining;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = if q >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, q)
                .expect("q validated in [0,1]")
                .sample(rng)
        };
        counts[i] = draw;
        remaining -= draw;
        mass = (mass - p).max(f64::MIN_POSITIVE);
    }
    counts
}

/// Builds the scale vector `eps_i = m_i / (k p_i)` for a draw of counts.
///
/// Coordinates with `p_i = 0` get `eps_i = 0`; a positive count there is an
/// inconsistent draw and is rejected.
pub fn make_mask(counts: &[u64], dist: &SamplingDistribution) -> Result<DropoutMask> {
    if counts.len() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total != dist.trials() {
        return Err(Error::CountSumMismatch {
            expected: dist.trials(),
            got: total,
        });
    }
    let k = dist.trials() as f64;
    let mut scale = Vec::with_capacity(counts.len());
    for (i, (&m, &p)) in counts.iter().zip(dist.probs()).enumerate() {
        if p > 0.0 {
            scale.push(m as f64 / (k * p));
        } else if m == 0 {
            scale.push(0.0);
        } else {
            return Err(Error::InconsistentDraw { index: i, count: m });
        }
    }
    Ok(DropoutMask {
        counts: counts.to_vec(),
        scale,
    })
}

/// Draws counts and builds the mask in one step.
pub fn sample_mask<R: Rng + ?Sized>(dist: &SamplingDistribution, rng: &mut R) -> DropoutMask {
    let counts = sample_multinomial_counts(dist, rng);
    make_mask(&counts, dist).expect("sampled counts always consistent")
}

/// One draw of a standard dropout scale vector: each coordinate is 0 with
/// probability `delta` and `1/(1-delta)` otherwise.
pub fn sample_standard_mask<R: Rng + ?Sized>(
    spec: &StandardDropoutSpec,
    dim: usize,
    rng: &mut R,
) -> Vec<f64> {
    let keep = spec.keep_scale();
    (0..dim)
        .map(|_| {
            if rng.random::<f64>() < spec.delta() {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

/// Element-wise product of a feature vector with a scale vector.
///
/// Sparse inputs stay sparse: only stored entries are touched.
pub fn apply_mask(x: &FeatureVec, scale: &[f64]) -> Result<FeatureVec> {
    match x {
        FeatureVec::Dense(v) => {
            if v.len() != scale.len() {
                return Err(Error::DimensionMismatch {
                    expected: scale.len(),
                    got: v.len(),
                });
            }
            Ok(FeatureVec::Dense(
                v.iter().zip(scale).map(|(a, s)| a * s).collect(),
            ))
        }
        FeatureVec::Sparse { indices, values } => {
            if let Some(&max) = indices.last() {
                if max >= scale.len() {
                    return Err(Error::DimensionMismatch {
                        expected: scale.len(),
                        got: max + 1,
                    });
                }
            }
            Ok(FeatureVec::Sparse {
                indices: indices.clone(),
                values: indices
                    .iter()
                    .zip(values)
                    .map(|(&i, &v)| v * scale[i])
                    .collect(),
            })
        }
    }
}

/// Sampling probabilities proportional to `sqrt(s_i + smoothing)`.
///
/// With zero smoothing this is the data-dependent rule
/// `p_i = sqrt(E[x_i^2]) / sum_j sqrt(E[x_j^2])`. The optional smoothing
/// term keeps features with zero observed moment alive; it is never applied
/// implicitly.
pub fn data_dependent_probs(moments: &SecondMoments, smoothing: f64) -> Result<Vec<f64>> {
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "smoothing must be non-negative, got {smoothing}"
        )));
    }
    let mut weights: Vec<f64> = moments
        .values()
        .iter()
        .map(|&s| (s + smoothing).sqrt())
        .collect();
    normalize_to_simplex(&mut weights)?;
    Ok(weights)
}

/// Sampling probabilities from the empirical second moments of one
/// mini-batch of layer outputs (rows are examples).
///
/// Identical, summation order included, to `data_dependent_probs` applied
/// to `SecondMoments::from_batch`.
pub fn minibatch_probs(batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let moments = SecondMoments::from_batch(batch)?;
    data_dependent_probs(&moments, 0.0)
}

/// Trial count matched to standard dropout at drop probability `delta` on
/// `dim` coordinates: `d (1 - delta)`, rounded half up, at least 1.
pub fn matched_trial_count(dim: usize, delta: f64) -> u64 {
    let k = (dim as f64 * (1.0 - delta) + 0.5).floor() as u64;
    k.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::FeatureVec;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn distribution_validation() {
        assert!(SamplingDistribution::new(vec![0.5, 0.5], 0).is_err());
        assert!(SamplingDistribution::new(vec![0.5, 0.6], 3).is_err());
        assert!(SamplingDistribution::new(vec![-0.1, 1.1], 3).is_err());
        assert!(SamplingDistribution::new(vec![0.5, 0.5], 3).is_ok());
        // k > d is allowed.
        assert!(SamplingDistribution::new(vec![0.5, 0.5], 17).is_ok());
    }

    #[test]
    fn degenerate_simplex_always_selects_the_live_coordinate() {
        let dist = SamplingDistribution::new(vec![1.0, 0.0], 5).unwrap();
        let mut r = rng(0);
        for _ in 0..100 {
            let m = sample_multinomial_counts(&dist, &mut r);
            assert_eq!(m, vec![5, 0]);
        }
    }

    #[test]
    fn two_coordinate_two_trial_law_matches_enumeration() {
        // p=(0.5,0.5), k=2: P(1,1)=0.5, P(2,0)=P(0,2)=0.25.
        let dist = SamplingDistribution::new(vec![0.5, 0.5], 2).unwrap();
        let mut r = rng(7);
        let n = 200_000;
        let mut freq: HashMap<Vec<u64>, u64> = HashMap::new();
        for _ in 0..n {
            *freq.entry(sample_multinomial_counts(&dist, &mut r)).or_insert(0) += 1;
        }
        let expect = [(vec![1, 1], 0.5), (vec![2, 0], 0.25), (vec![0, 2], 0.25)];
        for (outcome, p) in expect {
            let got = *freq.get(&outcome).unwrap_or(&0) as f64 / n as f64;
            let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (got - p).abs() <= band,
                "outcome {outcome:?}: got {got}, want {p} +- {band}"
            );
        }
    }

    #[test]
    fn uniform_counts_have_unit_mean() {
        // Uniform p over d=4, k=4: E[m_i] = 1.
        let dist = SamplingDistribution::uniform(4, 4).unwrap();
        let mut r = rng(1);
        let n = 100_000;
        let mut sums = [0u64; 4];
        for _ in 0..n {
            let m = sample_multinomial_counts(&dist, &mut r);
            assert_eq!(m.iter().sum::<u64>(), 4);
            for (s, c) in sums.iter_mut().zip(&m) {
                *s += c;
            }
        }
        for s in sums {
            let mean = s as f64 / n as f64;
            assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
        }
    }

    /// Reference sampler: k independent categorical trials.
    fn sample_by_trials<R: Rng + ?Sized>(dist: &SamplingDistribution, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; dist.dim()];
        for _ in 0..dist.trials() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = dist.dim() - 1;
            for (i, &p) in dist.probs().iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            counts[chosen] += 1;
        }
        counts
    }

    #[test]
    fn binomial_chain_agrees_with_categorical_trials() {
        // Both samplers must produce the exact multinomial pmf; compare their
        // empirical outcome frequencies against it on a skewed d=3 law.
        let dist = SamplingDistribution::new(vec![0.6, 0.3, 0.1], 3).unwrap();
        let exact = crate::theory::enumeration::count_distribution(&dist);
        let n = 120_000;
        for (which, sampler) in [
            ("chain", sample_multinomial_counts as fn(&SamplingDistribution, &mut ChaCha8Rng) -> Vec<u64>),
            ("trials", sample_by_trials as fn(&SamplingDistribution, &mut ChaCha8Rng) -> Vec<u64>),
        ] {
            let mut r = rng(42);
            let mut freq: HashMap<Vec<u64>, u64> = HashMap::new();
            for _ in 0..n {
                *freq.entry(sampler(&dist, &mut r)).or_insert(0) += 1;
            }
            for (outcome, p) in &exact {
                let got = *freq.get(outcome).unwrap_or(&0) as f64 / n as f64;
                let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-9;
                assert!(
                    (got - p).abs() <= band,
                    "{which} sampler, outcome {outcome:?}: got {got}, want {p} +- {band}"
                );
            }
        }
    }

    #[test]
    fn make_mask_hand_example() {
        // m=(2,0,1), p=(0.5,0.25,0.25), k=3 -> eps=(4/3, 0, 4/3).
        let dist = SamplingDistribution::new(vec![0.5, 0.25, 0.25], 3).unwrap();
        let mask = make_mask(&[2, 0, 1], &dist).unwrap();
        assert_eq!(mask.scale(), &[4.0 / 3.0, 0.0, 4.0 / 3.0]);
    }

    #[test]
    fn make_mask_degenerate_identity() {
        let dist = SamplingDistribution::new(vec![1.0, 0.0, 0.0], 4).unwrap();
        let mask = make_mask(&[4, 0, 0], &dist).unwrap();
        assert_eq!(mask.scale(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn make_mask_uniform_matches_count_over_keep_rate() {
        // Uniform p = 1/d: eps_i = m_i d / k.
        let d = 6;
        let dist = SamplingDistribution::uniform(d, 3).unwrap();
        let mut r = rng(3);
        for _ in 0..50 {
            let m = sample_multinomial_counts(&dist, &mut r);
            let mask = make_mask(&m, &dist).unwrap();
            for (i, &s) in mask.scale().iter().enumerate() {
                assert!((s - m[i] as f64 * d as f64 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn make_mask_rejects_inconsistent_draws() {
        let dist = SamplingDistribution::new(vec![1.0, 0.0], 3).unwrap();
        match make_mask(&[2, 1], &dist) {
            Err(Error::InconsistentDraw { index: 1, count: 1 }) => {}
            other => panic!("expected inconsistent draw, got {other:?}"),
        }
        match make_mask(&[2, 0], &dist) {
            Err(Error::CountSumMismatch { expected: 3, got: 2 }) => {}
            other => panic!("expected count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn standard_mask_examples() {
        let mut r = rng(11);
        let all_kept = sample_standard_mask(&StandardDropoutSpec::new(0.0).unwrap(), 8, &mut r);
        assert_eq!(all_kept, vec![1.0; 8]);

        let spec = StandardDropoutSpec::new(0.9).unwrap();
        let v = sample_standard_mask(&spec, 1000, &mut r);
        assert!(v.iter().all(|&s| s == 0.0 || (s - 10.0).abs() < 1e-12));

        assert!(StandardDropoutSpec::new(1.0).is_err());
        assert!(StandardDropoutSpec::new(-0.1).is_err());
    }

    #[test]
    fn standard_mask_is_unbiased_at_half() {
        let spec = StandardDropoutSpec::new(0.5).unwrap();
        let mut r = rng(5);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = sample_standard_mask(&spec, 1, &mut r);
            assert!(v[0] == 0.0 || v[0] == 2.0);
            sum += v[0];
        }
        assert!((sum / n as f64 - 1.0).abs() <= 0.02);
    }

    #[test]
    fn apply_mask_cases() {
        let x = FeatureVec::Dense(vec![1.0, 2.0, 3.0]);
        let y = apply_mask(&x, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y, x);

        let x = FeatureVec::Dense(vec![1.0, 2.0]);
        let y = apply_mask(&x, &[0.0, 2.0]).unwrap();
        assert_eq!(y, FeatureVec::Dense(vec![0.0, 4.0]));

        let x = FeatureVec::sparse(vec![3], vec![5.0]).unwrap();
        let y = apply_mask(&x, &[9.0, 9.0, 9.0, 0.5, 9.0]).unwrap();
        match y {
            FeatureVec::Sparse { indices, values } => {
                assert_eq!(indices, vec![3]);
                assert_eq!(values, vec![2.5]);
            }
            _ => panic!("sparse input must stay sparse"),
        }

        let x = FeatureVec::Dense(vec![1.0, 2.0, 3.0]);
        assert!(apply_mask(&x, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn data_dependent_probs_hand_values() {
        let m = SecondMoments::new(vec![4.0, 1.0]).unwrap();
        let p = data_dependent_probs(&m, 0.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);

        let m = SecondMoments::new(vec![3.7; 5]).unwrap();
        let p = data_dependent_probs(&m, 0.0).unwrap();
        for &pi in &p {
            assert!((pi - 0.2).abs() < 1e-15);
        }

        let m = SecondMoments::new(vec![1.0, 0.0, 1.0]).unwrap();
        let p = data_dependent_probs(&m, 0.0).unwrap();
        assert_eq!(p, vec![0.5, 0.0, 0.5]);

        let zero = SecondMoments::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            data_dependent_probs(&zero, 0.0),
            Err(Error::DegenerateDistribution)
        ));
        // Smoothing rescues the degenerate case and is uniform there.
        let p = data_dependent_probs(&zero, 1e-3).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn normalized_probs_pass_validation_at_high_dimension() {
        let moments = SecondMoments::new((0..40_000).map(|i| 1.0 + (i % 97) as f64).collect()).unwrap();
        let p = data_dependent_probs(&moments, 0.0).unwrap();
        SamplingDistribution::new(p, 10).unwrap();
    }

    #[test]
    fn minibatch_probs_hand_values() {
        let x = array![[1.0, 2.0], [-1.0, 2.0]];
        let p = minibatch_probs(x.view()).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);

        let single = array![[3.0, 4.0]];
        let p = minibatch_probs(single.view()).unwrap();
        assert!((p[0] - 3.0 / 7.0).abs() < 1e-15);
        assert!((p[1] - 4.0 / 7.0).abs() < 1e-15);

        let same = array![[2.0, 2.0, 2.0], [1.0, 1.0, 1.0]];
        let p = minibatch_probs(same.view()).unwrap();
        for &pi in &p {
            assert!((pi - 1.0 / 3.0).abs() < 1e-15);
        }

        let zero = array![[0.0, 0.0]];
        assert!(matches!(
            minibatch_probs(zero.view()),
            Err(Error::DegenerateDistribution)
        ));
    }

    #[test]
    fn minibatch_probs_equals_data_dependent_of_batch_moments() {
        let x = array![[0.3, -1.2, 5.0], [2.0, 0.0, -0.5], [1.5, 2.5, 0.25]];
        let via_batch = minibatch_probs(x.view()).unwrap();
        let moments = SecondMoments::from_batch(x.view()).unwrap();
        let via_moments = data_dependent_probs(&moments, 0.0).unwrap();
        // Bit-identical: same summation order by construction.
        assert_eq!(via_batch, via_moments);
    }

    #[test]
    fn probs_are_invariant_to_global_feature_scaling() {
        let base = SecondMoments::new(vec![0.7, 3.0, 0.02]).unwrap();
        let scaled =
            SecondMoments::new(base.values().iter().map(|s| s * 16.0).collect()).unwrap();
        let p0 = data_dependent_probs(&base, 0.0).unwrap();
        let p1 = data_dependent_probs(&scaled, 0.0).unwrap();
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn matched_trial_count_rounds_half_up() {
        assert_eq!(matched_trial_count(100, 0.5), 50);
        assert_eq!(matched_trial_count(101, 0.5), 51);
        assert_eq!(matched_trial_count(3, 0.99), 1);
        assert_eq!(matched_trial_count(10, 0.47), 5);
    }

    #[test]
    fn mask_law_dispatch() {
        let mut r = rng(9);
        let ones = MaskLaw::Identity.sample_scales(4, &mut r).unwrap();
        assert_eq!(ones, vec![1.0; 4]);

        let law = MaskLaw::Multinomial(SamplingDistribution::uniform(3, 2).unwrap());
        assert!(law.sample_scales(4, &mut r).is_err());
        assert_eq!(law.sample_scales(3, &mut r).unwrap().len(), 3);
    }
}
