//! Finite-difference verification of backpropagation.
//!
//! Central differences with step 1e-5 on randomly probed parameters, with
//! masks frozen so the loss is deterministic. Probes whose perturbation
//! crosses a ReLU kink (any pre-activation changes sign between the plus
//! and minus evaluations) are excluded by resampling: the loss is not
//! differentiable there.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::deep::{FeedForwardNet, Layer};
use crate::error::{Error, Result};

const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOutcome {
    pub max_rel_error: f64,
    pub probes: u32,
    pub resampled: u32,
}

#[derive(Debug, Clone, Copy)]
enum ParamRef {
    Weight { affine: usize, row: usize, col: usize },
    Bias { affine: usize, col: usize },
}

fn enumerate_params(net: &FeedForwardNet) -> Vec<ParamRef> {
    let mut out = Vec::new();
    let mut affine = 0;
    for layer in net.layers() {
        if let Layer::Affine(a) = layer {
            for row in 0..a.d_in() {
                for col in 0..a.d_out() {
                    out.push(ParamRef::Weight { affine, row, col });
                }
            }
            for col in 0..a.d_out() {
                out.push(ParamRef::Bias { affine, col });
            }
            affine += 1;
        }
    }
    out
}

fn perturb(net: &FeedForwardNet, param: ParamRef, delta: f64) -> FeedForwardNet {
    let mut clone = net.clone();
    let mut affine = 0;
    for layer in clone.layers_mut() {
        if let Layer::Affine(a) = layer {
            match param {
                ParamRef::Weight { affine: t, row, col } if t == affine => {
                    a.weights[(row, col)] += delta;
                }
                ParamRef::Bias { affine: t, col } if t == affine => {
                    a.biases[col] += delta;
                }
                _ => {}
            }
            affine += 1;
        }
    }
    clone
}

/// Sign pattern of every ReLU layer's input, used to detect kink crossings.
fn relu_signs(net: &FeedForwardNet, pass: &crate::deep::ForwardPass) -> Vec<Vec<bool>> {
    net.layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Layer::Relu))
        .map(|(idx, _)| pass.layer_input(idx).iter().map(|&z| z > 0.0).collect())
        .collect()
}

/// Compares analytic gradients against central differences on `probes`
/// random parameters and returns the worst relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn grad_check(
    net: &FeedForwardNet,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    masks: &[Array2<f64>],
    probes: u32,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckOutcome> {
    if probes == 0 {
        return Err(Error::InvalidConfig("need at least one probe".into()));
    }
    let params = enumerate_params(net);
    if params.is_empty() {
        return Err(Error::InvalidConfig("network has no parameters".into()));
    }
    let pass = net.forward_with_masks(x, Some(labels), masks)?;
    let grads = net.backward(&pass, labels)?;

    let mut max_rel = 0.0f64;
    let mut completed = 0u32;
    let mut resampled = 0u32;
    let attempt_cap = probes.saturating_mul(50).max(1000);
    let mut attempts = 0u32;
    while completed < probes {
        attempts += 1;
        if attempts > attempt_cap {
            return Err(Error::NonConvergence {
                residual: max_rel,
                iterations: attempts as u64,
            });
        }
        let param = params[rng.random_range(0..params.len())];
        let plus = perturb(net, param, FD_STEP);
        let minus = perturb(net, param, -FD_STEP);
        let pass_plus = plus.forward_with_masks(x, Some(labels), masks)?;
        let pass_minus = minus.forward_with_masks(x, Some(labels), masks)?;
        if relu_signs(&plus, &pass_plus) != relu_signs(&minus, &pass_minus) {
            resampled += 1;
            continue;
        }
        let loss_plus = pass_plus.loss().expect("labels given");
        let loss_minus = pass_minus.loss().expect("labels given");
        let numeric = (loss_plus - loss_minus) / (2.0 * FD_STEP);
        let analytic = match param {
            ParamRef::Weight { affine, row, col } => grads.affine[affine].0[(row, col)],
            ParamRef::Bias { affine, col } => grads.affine[affine].1[col],
        };
        let rel =
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
        max_rel = max_rel.max(rel);
        completed += 1;
    }
    Ok(GradCheckOutcome {
        max_rel_error: max_rel,
        probes: completed,
        resampled,
    })
}
