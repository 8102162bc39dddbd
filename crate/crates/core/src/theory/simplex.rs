//! Numeric minimization of the masked squared-norm expectation over the
//! probability simplex.
//!
//! Projected gradient descent with backtracking verifies the closed-form
//! minimizer `p*_i = sqrt(s_i)/sum_j sqrt(s_j)` without using it: the
//! objective is convex over the simplex, so a stationary point certifies
//! the optimum. A dense grid search covers `d <= 3` as a fallback and as a
//! test oracle.

use crate::dropout::{SamplingDistribution, SecondMoments};
use crate::error::{Error, Result};
use crate::theory::expected_masked_sqnorm_closed;

/// Result of a numeric simplex minimization.
#[derive(Debug, Clone)]
pub struct SimplexMinimum {
    pub probs: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
    /// Max-norm movement of the final accepted step; the stationarity
    /// certificate for the convex objective.
    pub residual: f64,
}

/// Euclidean projection of a point onto the probability simplex
/// (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    let mut support = 0;
    for (i, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (acc - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
            support = i + 1;
        }
    }
    debug_assert!(support > 0);
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

/// Objective: `E ||x ∘ eps||^2` as a function of `p` for fixed moments and
/// trial count. Infinite when mass is missing from a live coordinate.
fn objective(moments: &SecondMoments, probs: &[f64], trials: u64) -> f64 {
    let k = trials as f64;
    let mut ratio = 0.0;
    let mut total = 0.0;
    for (&s, &p) in moments.values().iter().zip(probs) {
        total += s;
        if s == 0.0 {
            continue;
        }
        if p <= 0.0 {
            return f64::INFINITY;
        }
        ratio += s / p;
    }
    ratio / k + (k - 1.0) / k * total
}

fn gradient(moments: &SecondMoments, probs: &[f64], trials: u64) -> Vec<f64> {
    let k = trials as f64;
    moments
        .values()
        .iter()
        .zip(probs)
        .map(|(&s, &p)| if s == 0.0 { 0.0 } else { -s / (k * p * p) })
        .collect()
}

/// Minimizes the masked squared-norm expectation over the simplex by
/// projected gradient descent with backtracking, starting from uniform.
///
/// Converges when the iterate moves by at most `tolerance / 10` in max
/// norm; errors out with the residual if the iteration cap is hit first.
pub fn minimize_sqnorm_over_simplex(
    moments: &SecondMoments,
    trials: u64,
    tolerance: f64,
) -> Result<SimplexMinimum> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    if trials == 0 {
        return Err(Error::ZeroTrialCount);
    }
    if moments.values().iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let d = moments.dim();
    let mut p = vec![1.0 / d as f64; d];
    let mut f = objective(moments, &p, trials);
    let move_tol = tolerance / 10.0;
    let max_iterations = 200_000u64;
    let mut step = 1.0;
    let mut residual = f64::INFINITY;

    for iter in 1..=max_iterations {
        let g = gradient(moments, &p, trials);
        // Backtrack until the proximal sufficient-decrease condition holds.
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = p
                .iter()
                .zip(&g)
                .map(|(&pi, &gi)| pi - step * gi)
                .collect();
            let candidate = project_to_simplex(&candidate);
            let fc = objective(moments, &candidate, trials);
            let linear: f64 = g
                .iter()
                .zip(candidate.iter().zip(&p))
                .map(|(&gi, (&ci, &pi))| gi * (ci - pi))
                .sum();
            let sq: f64 = candidate
                .iter()
                .zip(&p)
                .map(|(&ci, &pi)| (ci - pi) * (ci - pi))
                .sum();
            if fc.is_finite() && fc <= f + linear + sq / (2.0 * step) {
                accepted = Some((candidate, fc, sq));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext, _sq)) = accepted else {
            return Err(Error::NonConvergence {
                residual,
                iterations: iter,
            });
        };
        residual = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        f = fnext;
        if residual <= move_tol {
            return Ok(SimplexMinimum {
                probs: p,
                objective: f,
                iterations: iter,
                residual,
            });
        }
        // Allow the step to grow back after cautious phases.
        step = (step * 1.5).min(1.0e6);
    }
    // Dense grid rescue for tiny dimensions.
    if d <= 3 {
        let grid = grid_minimize_sqnorm(moments, trials, tolerance.max(1e-4).min(1e-3))?;
        return Ok(grid);
    }
    Err(Error::NonConvergence {
        residual,
        iterations: max_iterations,
    })
}

/// Dense grid search over the simplex, `d <= 3` only. The grid step bounds
/// the per-coordinate distance to the true minimizer.
pub fn grid_minimize_sqnorm(
    moments: &SecondMoments,
    trials: u64,
    grid_step: f64,
) -> Result<SimplexMinimum> {
    let d = moments.dim();
    if d > 3 {
        return Err(Error::InvalidConfig(format!(
            "grid search supports d <= 3, got {d}"
        )));
    }
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "grid step must lie in (0, 1), got {grid_step}"
        )));
    }
    let steps = (1.0 / grid_step).round() as usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |p: Vec<f64>, evals: &mut u64| {
        let f = objective(moments, &p, trials);
        *evals += 1;
        if best.as_ref().is_none_or(|(_, fb)| f < *fb) {
            best = Some((p, f));
        }
    };
    let mut evals = 0u64;
    match d {
        1 => consider(vec![1.0], &mut evals),
        2 => {
            for a in 0..=steps {
                let p0 = a as f64 / steps as f64;
                consider(vec![p0, 1.0 - p0], &mut evals);
            }
        }
        _ => {
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    let p0 = a as f64 / steps as f64;
                    let p1 = b as f64 / steps as f64;
                    consider(vec![p0, p1, 1.0 - p0 - p1], &mut evals);
                }
            }
        }
    }
    let (probs, objective) = best.expect("grid is never empty");
    Ok(SimplexMinimum {
        probs,
        objective,
        iterations: evals,
        residual: grid_step,
    })
}

/// The objective value at an explicitly validated distribution; a
/// convenience for comparing candidates against the closed form.
pub fn sqnorm_objective(moments: &SecondMoments, probs: &[f64], trials: u64) -> Result<f64> {
    let dist = SamplingDistribution::new(probs.to_vec(), trials)?;
    expected_masked_sqnorm_closed(moments, &dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::optimal_probs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_basics() {
        let p = project_to_simplex(&[0.5, 0.5]);
        assert_eq!(p, vec![0.5, 0.5]);

        let p = project_to_simplex(&[2.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);

        let p = project_to_simplex(&[-1.0, -2.0, 4.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    proptest::proptest! {
        #[test]
        fn projection_lands_on_simplex(v in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let p = project_to_simplex(&v);
            proptest::prop_assert!(p.iter().all(|&x| x >= 0.0));
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // Projection property: no simplex point from a reference set is closer.
            let d = v.len();
            let uniform = vec![1.0 / d as f64; d];
            let dist = |a: &[f64]| -> f64 {
                a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum()
            };
            proptest::prop_assert!(dist(&p) <= dist(&uniform) + 1e-9);
        }
    }

    #[test]
    fn symmetric_case_is_uniform() {
        let m = SecondMoments::new(vec![1.0, 1.0]).unwrap();
        let min = minimize_sqnorm_over_simplex(&m, 2, 1e-6).unwrap();
        assert!((min.probs[0] - 0.5).abs() < 1e-4);
        assert!((min.probs[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn two_coordinate_case_matches_sqrt_rule() {
        // s=(4,1) -> p* = (2/3, 1/3).
        let m = SecondMoments::new(vec![4.0, 1.0]).unwrap();
        let min = minimize_sqnorm_over_simplex(&m, 3, 1e-6).unwrap();
        assert!((min.probs[0] - 2.0 / 3.0).abs() < 1e-3, "{:?}", min.probs);
        assert!((min.probs[1] - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn grid_oracle_matches_sqrt_rule_d3() {
        // s=(9,4,1) -> p* = (1/2, 1/3, 1/6); grid step 1e-3 pins each
        // coordinate within 2e-3.
        let m = SecondMoments::new(vec![9.0, 4.0, 1.0]).unwrap();
        let grid = grid_minimize_sqnorm(&m, 2, 1e-3).unwrap();
        let want = [0.5, 1.0 / 3.0, 1.0 / 6.0];
        for (got, want) in grid.probs.iter().zip(want) {
            assert!((got - want).abs() <= 2e-3, "{:?}", grid.probs);
        }
    }

    #[test]
    fn pgd_matches_closed_minimizer_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let d = *[2usize, 3, 5, 10].iter().nth(rng.random_range(0..4)).unwrap();
            let s: Vec<f64> = (0..d)
                .map(|_| 10f64.powf(rng.random::<f64>() * 4.0 - 2.0))
                .collect();
            let m = SecondMoments::new(s).unwrap();
            let k = rng.random_range(1..=8);
            let min = minimize_sqnorm_over_simplex(&m, k, 1e-6).unwrap();
            let star = optimal_probs(&m).unwrap();
            for (a, b) in min.probs.iter().zip(&star) {
                assert!((a - b).abs() <= 2e-3, "numeric {a} vs closed {b}");
            }
            let f_star = sqnorm_objective(&m, &star, k).unwrap();
            assert!(min.objective >= f_star - 1e-9);
        }
    }

    #[test]
    fn zero_moment_coordinate_gets_no_mass() {
        let m = SecondMoments::new(vec![1.0, 0.0, 4.0]).unwrap();
        let min = minimize_sqnorm_over_simplex(&m, 2, 1e-6).unwrap();
        assert!(min.probs[1] < 1e-3, "{:?}", min.probs);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = SecondMoments::new(vec![0.0, 0.0]).unwrap();
        assert!(minimize_sqnorm_over_simplex(&m, 1, 1e-6).is_err());
        let m = SecondMoments::new(vec![1.0, 1.0]).unwrap();
        assert!(minimize_sqnorm_over_simplex(&m, 1, 0.0).is_err());
        assert!(grid_minimize_sqnorm(&SecondMoments::new(vec![1.0; 4]).unwrap(), 1, 1e-2).is_err());
    }
}
