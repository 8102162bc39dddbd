//! Closed-form quantities of multinomial dropout, each paired with an
//! independent Monte Carlo or enumeration oracle.
//!
//! The central identity: for counts `m ~ Mult(p; k)` and scales
//! `eps_i = m_i / (k p_i)`,
//!
//! ```text
//! E[ ||x ∘ eps||^2 ] = (1/k) sum_i s_i / p_i + ((k-1)/k) sum_i s_i
//! ```
//!
//! with `s_i = E[x_i^2]`. Minimizing over the simplex gives
//! `p*_i = sqrt(s_i) / sum_j sqrt(s_j)`, the sampling rule behind the
//! data-dependent and evolutional dropouts.

pub mod checks;
pub mod enumeration;
pub mod mc;
pub mod simplex;

use ndarray::Array2;
use serde::Serialize;

use crate::dropout::{data_dependent_probs, SamplingDistribution, SecondMoments};
use crate::error::{Error, Result};
use crate::vector::kahan_sum;

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    MonteCarlo,
    ClosedForm,
    Enumeration,
}

/// A regularizer (or expectation) value with its sampling uncertainty.
/// Closed forms and enumerations carry a zero standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizerEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub method: EstimateMethod,
}

/// Factors of the stochastic-optimization risk bound `G B r / sqrt(n)`:
/// `G` bounds the loss derivative, `B` bounds `sqrt(E ||x ∘ eps||^2)`,
/// `r` is the comparator norm radius and `n` the number of SGD steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBoundFactors {
    pub lipschitz: f64,
    pub masked_norm_bound: f64,
    pub radius: f64,
    pub steps: u64,
}

/// `G B r / sqrt(n)`.
pub fn risk_bound_value(factors: &RiskBoundFactors) -> Result<f64> {
    let checks = [
        ("lipschitz", factors.lipschitz),
        ("masked_norm_bound", factors.masked_norm_bound),
        ("radius", factors.radius),
    ];
    for (name, value) in checks {
        if !(value > 0.0) {
            return Err(Error::NonPositiveFactor { name, value });
        }
    }
    if factors.steps == 0 {
        return Err(Error::NonPositiveFactor {
            name: "steps",
            value: 0.0,
        });
    }
    Ok(factors.lipschitz * factors.masked_norm_bound * factors.radius
        / (factors.steps as f64).sqrt())
}

/// Curvature weight of the logistic loss at margin `z`:
/// `q = 1/(1+exp(-z/2))` and `weight = q (1 - q) <= 1/4`, with equality
/// exactly at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticCurvature {
    pub q: f64,
    pub weight: f64,
}

impl LogisticCurvature {
    pub fn at_margin(z: f64) -> Self {
        let q = 1.0 / (1.0 + (-z / 2.0).exp());
        Self {
            q,
            weight: q * (1.0 - q),
        }
    }
}

/// Sums `A = sum_i s_i / p_i` and `B = sum_i s_i`, skipping coordinates
/// with `s_i = 0`. A positive moment on a zero-probability coordinate makes
/// the masked expectation diverge.
fn moment_probability_sums(
    moments: &SecondMoments,
    dist: &SamplingDistribution,
) -> Result<(f64, f64)> {
    if moments.dim() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: moments.dim(),
        });
    }
    let mut ratio = crate::vector::KahanSum::new();
    for (i, (&s, &p)) in moments.values().iter().zip(dist.probs()).enumerate() {
        if s == 0.0 {
            continue;
        }
        if p <= 0.0 {
            return Err(Error::InfiniteExpectation { index: i, moment: s });
        }
        ratio.add(s / p);
    }
    let total = kahan_sum(moments.values().iter().copied());
    Ok((ratio.value(), total))
}

/// Closed form of `E ||x ∘ eps||^2` under the multinomial mask law:
/// `(1/k) sum_i s_i/p_i + ((k-1)/k) sum_i s_i`.
pub fn expected_masked_sqnorm_closed(
    moments: &SecondMoments,
    dist: &SamplingDistribution,
) -> Result<f64> {
    let (ratio, total) = moment_probability_sums(moments, dist)?;
    let k = dist.trials() as f64;
    Ok(ratio / k + (k - 1.0) / k * total)
}

/// The simplex minimizer of the masked squared-norm expectation:
/// `p*_i = sqrt(s_i) / sum_j sqrt(s_j)`.
///
/// Same formula as the unsmoothed data-dependent sampling probabilities; the
/// numeric verifier in [`simplex`] provides the independent check.
pub fn optimal_probs(moments: &SecondMoments) -> Result<Vec<f64>> {
    data_dependent_probs(moments, 0.0)
}

/// Covariance of `x ∘ eps` over the mask law:
/// `(1/k) diag(x_i^2 / p_i) - (1/k) x x^T`.
pub fn mask_covariance_closed(x: &[f64], dist: &SamplingDistribution) -> Result<Array2<f64>> {
    let d = dist.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    for (i, (&xi, &p)) in x.iter().zip(dist.probs()).enumerate() {
        if xi != 0.0 && p <= 0.0 {
            return Err(Error::InfiniteExpectation {
                index: i,
                moment: xi * xi,
            });
        }
    }
    let k = dist.trials() as f64;
    let probs = dist.probs();
    Ok(Array2::from_shape_fn((d, d), |(i, j)| {
        let cross = x[i] * x[j] / k;
        if i == j {
            let diag = if probs[i] > 0.0 {
                x[i] * x[i] / (probs[i] * k)
            } else {
                0.0
            };
            diag - cross
        } else {
            -cross
        }
    }))
}

/// Quadratic approximation of the dropout regularizer for logistic loss:
/// the sample mean of `q(w^T x)(1 - q(w^T x)) w^T C(x) w / 2` with `C(x)`
/// the closed-form mask covariance.
pub fn quadratic_regularizer(
    w: &[f64],
    sample: &[Vec<f64>],
    dist: &SamplingDistribution,
) -> Result<RegularizerEstimate> {
    if sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = crate::vector::KahanSum::new();
    for x in sample {
        if x.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: x.len(),
            });
        }
        let cov = mask_covariance_closed(x, dist)?;
        let margin: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        let curvature = LogisticCurvature::at_margin(margin).weight;
        let mut quad = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                quad += w[i] * cov[(i, j)] * w[j];
            }
        }
        acc.add(curvature * quad / 2.0);
    }
    Ok(RegularizerEstimate {
        value: acc.value() / sample.len() as f64,
        standard_error: 0.0,
        method: EstimateMethod::ClosedForm,
    })
}

/// Upper bound on the quadratic regularizer:
/// `(1/(8k)) ||w||^2 (sum_i s_i/p_i - sum_i s_i)`.
pub fn regularizer_upper_bound(
    w: &[f64],
    moments: &SecondMoments,
    dist: &SamplingDistribution,
) -> Result<f64> {
    if w.len() != moments.dim() {
        return Err(Error::DimensionMismatch {
            expected: moments.dim(),
            got: w.len(),
        });
    }
    let (ratio, total) = moment_probability_sums(moments, dist)?;
    let k = dist.trials() as f64;
    let sqnorm: f64 = w.iter().map(|a| a * a).sum();
    Ok(sqnorm / (8.0 * k) * (ratio - total))
}

/// Per-coordinate second moment of multinomial counts:
/// `E[m_i^2] = k p_i (1 - p_i) + k^2 p_i^2`.
pub fn multinomial_second_moment(dist: &SamplingDistribution) -> Vec<f64> {
    let k = dist.trials() as f64;
    dist.probs()
        .iter()
        .map(|&p| k * p * (1.0 - p) + k * k * p * p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_sqnorm_closed_hand_values() {
        // d=2, s=(1,1), p=(0.5,0.5), k=1 -> 4.
        let m = SecondMoments::new(vec![1.0, 1.0]).unwrap();
        let dist = SamplingDistribution::new(vec![0.5, 0.5], 1).unwrap();
        assert!((expected_masked_sqnorm_closed(&m, &dist).unwrap() - 4.0).abs() < 1e-12);

        // k = 1: the second term vanishes, value = sum s_i / p_i.
        let m = SecondMoments::new(vec![0.3, 0.9, 0.1]).unwrap();
        let dist = SamplingDistribution::new(vec![0.2, 0.5, 0.3], 1).unwrap();
        let want = 0.3 / 0.2 + 0.9 / 0.5 + 0.1 / 0.3;
        assert!((expected_masked_sqnorm_closed(&m, &dist).unwrap() - want).abs() < 1e-12);

        // s=(4,1): the sqrt rule beats uniform (9 vs 10 at k=1).
        let m = SecondMoments::new(vec![4.0, 1.0]).unwrap();
        let opt = SamplingDistribution::new(optimal_probs(&m).unwrap(), 1).unwrap();
        let uni = SamplingDistribution::uniform(2, 1).unwrap();
        let at_opt = expected_masked_sqnorm_closed(&m, &opt).unwrap();
        let at_uni = expected_masked_sqnorm_closed(&m, &uni).unwrap();
        assert!((at_opt - 9.0).abs() < 1e-12);
        assert!((at_uni - 10.0).abs() < 1e-12);
        assert!(at_opt <= at_uni);
    }

    #[test]
    fn masked_sqnorm_diverges_on_dead_coordinate() {
        let m = SecondMoments::new(vec![1.0, 2.0]).unwrap();
        let dist = SamplingDistribution::new(vec![1.0, 0.0], 2).unwrap();
        assert!(matches!(
            expected_masked_sqnorm_closed(&m, &dist),
            Err(Error::InfiniteExpectation { index: 1, .. })
        ));
        // A zero moment on the dead coordinate is fine.
        let m = SecondMoments::new(vec![1.0, 0.0]).unwrap();
        assert!((expected_masked_sqnorm_closed(&m, &dist).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimal_probs_hand_values() {
        let m = SecondMoments::new(vec![9.0, 4.0, 1.0]).unwrap();
        let p = optimal_probs(&m).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[2] - 1.0 / 6.0).abs() < 1e-15);

        let m = SecondMoments::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(optimal_probs(&m).unwrap(), vec![0.5, 0.5]);

        let m = SecondMoments::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(optimal_probs(&m).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn covariance_hand_values() {
        // x=(1,1), p=(0.5,0.5), k=1 -> [[1,-1],[-1,1]].
        let dist = SamplingDistribution::new(vec![0.5, 0.5], 1).unwrap();
        let c = mask_covariance_closed(&[1.0, 1.0], &dist).unwrap();
        let want = [[1.0, -1.0], [-1.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((c[(i, j)] - want[i][j]).abs() < 1e-12);
            }
        }

        let z = mask_covariance_closed(&[0.0, 0.0], &dist).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        // Diagonal entries (1/k)(x_i^2/p_i - x_i^2) are non-negative for p_i <= 1.
        let dist = SamplingDistribution::new(vec![0.1, 0.2, 0.7], 4).unwrap();
        let c = mask_covariance_closed(&[1.5, -2.0, 0.25], &dist).unwrap();
        for i in 0..3 {
            assert!(c[(i, i)] >= 0.0);
        }

        let dead = SamplingDistribution::new(vec![1.0, 0.0], 1).unwrap();
        assert!(mask_covariance_closed(&[1.0, 1.0], &dead).is_err());
    }

    #[test]
    fn quadratic_regularizer_hand_value() {
        // Single point x=(1,1), w=(1,-1), p=(0.5,0.5), k=1:
        // w^T C w = 4, margin 0 -> weight 1/4, value = 0.25*4/2 = 0.5.
        let dist = SamplingDistribution::new(vec![0.5, 0.5], 1).unwrap();
        let est = quadratic_regularizer(&[1.0, -1.0], &[vec![1.0, 1.0]], &dist).unwrap();
        assert!((est.value - 0.5).abs() < 1e-12);
        assert_eq!(est.method, EstimateMethod::ClosedForm);

        let zero = quadratic_regularizer(&[0.0, 0.0], &[vec![1.0, 1.0]], &dist).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn quadratic_regularizer_is_nonnegative() {
        // The quadratic form is over a covariance matrix, hence PSD.
        let dist = SamplingDistribution::new(vec![0.4, 0.35, 0.25], 2).unwrap();
        let sample = vec![vec![1.0, -0.5, 2.0], vec![0.0, 3.0, -1.0]];
        for w in [[0.5, -1.0, 2.0], [10.0, 0.0, -3.0], [0.01, 0.02, 0.03]] {
            let est = quadratic_regularizer(&w, &sample, &dist).unwrap();
            assert!(est.value >= -1e-12, "value {}", est.value);
        }
    }

    #[test]
    fn upper_bound_hand_value() {
        // d=2, s=(1,1), uniform p, k=1, ||w||^2=1 -> (1/8)(4-2) = 0.25.
        let m = SecondMoments::new(vec![1.0, 1.0]).unwrap();
        let dist = SamplingDistribution::uniform(2, 1).unwrap();
        let b = regularizer_upper_bound(&[1.0, 0.0], &m, &dist).unwrap();
        assert!((b - 0.25).abs() < 1e-12);

        let z = regularizer_upper_bound(&[0.0, 0.0], &m, &dist).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn count_second_moment_hand_values() {
        let dist = SamplingDistribution::new(vec![0.5, 0.5], 2).unwrap();
        assert_eq!(multinomial_second_moment(&dist), vec![1.5, 1.5]);

        let dist = SamplingDistribution::new(vec![1.0, 0.0], 3).unwrap();
        assert_eq!(multinomial_second_moment(&dist), vec![9.0, 0.0]);
    }

    #[test]
    fn risk_bound_values() {
        let f = RiskBoundFactors {
            lipschitz: 1.0,
            masked_norm_bound: 1.0,
            radius: 1.0,
            steps: 1,
        };
        assert_eq!(risk_bound_value(&f).unwrap(), 1.0);
        let f = RiskBoundFactors { steps: 100, ..f };
        assert!((risk_bound_value(&f).unwrap() - 0.1).abs() < 1e-15);
        let bad = RiskBoundFactors {
            lipschitz: 0.0,
            ..f
        };
        assert!(risk_bound_value(&bad).is_err());
    }

    #[test]
    fn curvature_peaks_at_zero_margin() {
        let at_zero = LogisticCurvature::at_margin(0.0);
        assert!((at_zero.q - 0.5).abs() < 1e-15);
        assert!((at_zero.weight - 0.25).abs() < 1e-15);
        for z in [-3.0, -0.7, 0.4, 8.0] {
            let c = LogisticCurvature::at_margin(z);
            assert!(c.weight > 0.0 && c.weight < 0.25);
        }
    }
}
