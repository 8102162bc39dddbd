//! Exhaustive enumeration oracles over all multinomial outcomes.
//!
//! These compute expectations by summing `P(m) * f(m)` over every
//! composition of `k` trials into `d` coordinates. They never call the
//! closed forms they are used to verify. Outcome counts grow as
//! `C(k+d-1, d-1)`, so keep `d` and `k` small.

use ndarray::{Array1, Array2};

use crate::dropout::SamplingDistribution;
use crate::error::{Error, Result};

/// All count vectors `m` with `sum(m) = k` over `d` coordinates.
pub fn multinomial_outcomes(dim: usize, trials: u64) -> Vec<Vec<u64>> {
    fn rec(out: &mut Vec<Vec<u64>>, prefix: &mut Vec<u64>, left: u64, remaining_dims: usize) {
        if remaining_dims == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=left {
            prefix.push(take);
            rec(out, prefix, left - take, remaining_dims - 1);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 {
        rec(&mut out, &mut Vec::with_capacity(dim), trials, dim);
    }
    out
}

fn factorial(n: u64) -> f64 {
    assert!(n <= 20, "enumeration factorials are exact only up to 20!");
    (1..=n).map(|v| v as f64).product()
}

/// Probability of one outcome: `k!/(prod m_i!) * prod p_i^{m_i}`.
/// Coordinates with `p_i = 0` force probability 0 unless `m_i = 0`.
pub fn outcome_probability(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let k: u64 = counts.iter().sum();
    let mut value = factorial(k);
    for (&m, &p) in counts.iter().zip(probs) {
        if m == 0 {
            continue;
        }
        if p <= 0.0 {
            return 0.0;
        }
        value *= p.powi(m as i32) / factorial(m);
    }
    value
}

/// Outcomes of the law paired with their exact probabilities.
pub fn count_distribution(dist: &SamplingDistribution) -> Vec<(Vec<u64>, f64)> {
    multinomial_outcomes(dist.dim(), dist.trials())
        .into_iter()
        .map(|m| {
            let p = outcome_probability(&m, dist.probs());
            (m, p)
        })
        .collect()
}

/// Scale vector of one outcome: `eps_i = m_i/(k p_i)`, 0 on dead coordinates.
fn outcome_scales(counts: &[u64], dist: &SamplingDistribution) -> Vec<f64> {
    let k = dist.trials() as f64;
    counts
        .iter()
        .zip(dist.probs())
        .map(|(&m, &p)| if p > 0.0 { m as f64 / (k * p) } else { 0.0 })
        .collect()
}

/// `E ||x ∘ eps||^2` by summing over every outcome and every sample point.
///
/// Rejects sample points carrying mass on a zero-probability coordinate,
/// matching the precondition of the closed form it verifies.
pub fn expected_masked_sqnorm_enum(
    sample: &[Vec<f64>],
    dist: &SamplingDistribution,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for x in sample {
        if x.len() != dist.dim() {
            return Err(Error::DimensionMismatch {
                expected: dist.dim(),
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
    }
    let outcomes = count_distribution(dist);
    let mut total = 0.0;
    for x in sample {
        for (m, prob) in &outcomes {
            if *prob == 0.0 {
                continue;
            }
            let scales = outcome_scales(m, dist);
            let sq: f64 = x
                .iter()
                .zip(&scales)
                .map(|(xi, s)| {
                    let v = xi * s;
                    v * v
                })
                .sum();
            total += prob * sq;
        }
    }
    Ok(total / sample.len() as f64)
}

/// `E[m_i]` and `E[m_i^2]` per coordinate by enumeration.
pub fn count_moments_enum(dist: &SamplingDistribution) -> (Vec<f64>, Vec<f64>) {
    let d = dist.dim();
    let mut first = vec![0.0; d];
    let mut second = vec![0.0; d];
    for (m, prob) in count_distribution(dist) {
        for i in 0..d {
            let c = m[i] as f64;
            first[i] += prob * c;
            second[i] += prob * c * c;
        }
    }
    (first, second)
}

/// Covariance of `x ∘ eps` by enumeration: `E[(u - E u)(u - E u)^T]` with
/// the mean itself computed by enumeration.
pub fn mask_covariance_enum(x: &[f64], dist: &SamplingDistribution) -> Result<Array2<f64>> {
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
    let outcomes = count_distribution(dist);
    let mut mean = Array1::<f64>::zeros(d);
    for (m, prob) in &outcomes {
        let scales = outcome_scales(m, dist);
        for i in 0..d {
            mean[i] += prob * x[i] * scales[i];
        }
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for (m, prob) in &outcomes {
        let scales = outcome_scales(m, dist);
        for i in 0..d {
            let di = x[i] * scales[i] - mean[i];
            for j in 0..d {
                let dj = x[j] * scales[j] - mean[j];
                cov[(i, j)] += prob * di * dj;
            }
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{
        expected_masked_sqnorm_closed, mask_covariance_closed, multinomial_second_moment,
    };
    use crate::dropout::SecondMoments;

    #[test]
    fn outcome_count_is_stars_and_bars() {
        // C(k+d-1, d-1) outcomes.
        assert_eq!(multinomial_outcomes(2, 2).len(), 3);
        assert_eq!(multinomial_outcomes(3, 3).len(), 10);
        assert_eq!(multinomial_outcomes(4, 2).len(), 10);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let dist = SamplingDistribution::new(vec![0.2, 0.3, 0.5], 4).unwrap();
        let total: f64 = count_distribution(&dist).iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumerated_sqnorm_matches_two_mask_hand_case() {
        // x=(1,1), p=(0.5,0.5), k=1: masks (2,0) and (0,2), each 1/2,
        // both with squared norm 4.
        let dist = SamplingDistribution::new(vec![0.5, 0.5], 1).unwrap();
        let v = expected_masked_sqnorm_enum(&[vec![1.0, 1.0]], &dist).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_agrees_with_closed_form_small_cases() {
        let cases: Vec<(Vec<Vec<f64>>, Vec<f64>, u64)> = vec![
            (vec![vec![1.0, -2.0]], vec![0.3, 0.7], 1),
            (vec![vec![1.0, 0.5], vec![-1.0, 2.0]], vec![0.6, 0.4], 2),
            (
                vec![vec![0.2, 1.0, -0.7], vec![1.5, 0.0, 0.1]],
                vec![0.25, 0.3, 0.45],
                3,
            ),
        ];
        for (sample, probs, k) in cases {
            let dist = SamplingDistribution::new(probs, k).unwrap();
            let d = dist.dim();
            let n = sample.len() as f64;
            let moments = SecondMoments::new(
                (0..d)
                    .map(|i| sample.iter().map(|x| x[i] * x[i]).sum::<f64>() / n)
                    .collect(),
            )
            .unwrap();
            let closed = expected_masked_sqnorm_closed(&moments, &dist).unwrap();
            let brute = expected_masked_sqnorm_enum(&sample, &dist).unwrap();
            assert!(
                (closed - brute).abs() <= 1e-12,
                "closed {closed} vs enumeration {brute}"
            );
        }
    }

    #[test]
    fn enumerated_count_moments_match_identity() {
        // E[m^2] = k p (1-p) + k^2 p^2, checked for d<=3, k<=4.
        for (probs, k) in [
            (vec![0.5, 0.5], 2),
            (vec![0.1, 0.9], 4),
            (vec![0.2, 0.3, 0.5], 3),
            (vec![1.0, 0.0], 3),
        ] {
            let dist = SamplingDistribution::new(probs, k).unwrap();
            let (first, second) = count_moments_enum(&dist);
            let closed = multinomial_second_moment(&dist);
            for i in 0..dist.dim() {
                let mean = dist.trials() as f64 * dist.probs()[i];
                assert!((first[i] - mean).abs() < 1e-12);
                assert!(
                    (second[i] - closed[i]).abs() < 1e-12,
                    "coordinate {i}: {} vs {}",
                    second[i],
                    closed[i]
                );
            }
        }
    }

    #[test]
    fn enumerated_covariance_matches_closed_form() {
        for (x, probs, k) in [
            (vec![1.0, 1.0], vec![0.5, 0.5], 1),
            (vec![2.0, -1.0], vec![0.25, 0.75], 3),
            (vec![0.5, 1.5, -2.0], vec![0.2, 0.45, 0.35], 2),
        ] {
            let dist = SamplingDistribution::new(probs, k).unwrap();
            let closed = mask_covariance_closed(&x, &dist).unwrap();
            let brute = mask_covariance_enum(&x, &dist).unwrap();
            for i in 0..dist.dim() {
                for j in 0..dist.dim() {
                    assert!(
                        (closed[(i, j)] - brute[(i, j)]).abs() < 1e-12,
                        "entry ({i},{j}): {} vs {}",
                        closed[(i, j)],
                        brute[(i, j)]
                    );
                }
            }
        }
    }
}
