//! Minimal dense feedforward network (affine → ReLU → ... → softmax
//! cross-entropy) with a dropout layer that supports standard,
//! uniform-multinomial and evolutional modes, trained by mini-batch SGD
//! with momentum.
//!
//! Evolutional dropout recomputes its sampling probabilities from the
//! current batch of layer outputs before drawing one mask row per example,
//! then emits `X̂ = X ∘ Σ`. At inference dropout layers are the identity:
//! the scaling happens entirely in training.

mod checkpoint;
mod gradcheck;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::dropout::{
    minibatch_probs, sample_mask, sample_standard_mask, SamplingDistribution,
    StandardDropoutSpec,
};
use crate::error::{Error, Result};
use crate::shallow::StepSizeSchedule;
use crate::trace::{ClockMode, RunClock, TraceRow, TrainingTrace};
use crate::vector::KahanSum;

/// Dropout law applied to a layer's outputs during training.
#[derive(Debug, Clone, PartialEq)]
pub enum DeepDropoutMode {
    /// i.i.d. Bernoulli drop with probability `delta` per activation.
    Standard { delta: f64 },
    /// Multinomial masks with uniform probabilities, `trials` slots.
    UniformMultinomial { trials: u64 },
    /// Multinomial masks with probabilities recomputed from each batch.
    Evolutional { trials: u64 },
}

/// Dense layer: `x W + b`, weights stored input-major (`d_in x d_out`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl AffineLayer {
    pub fn gaussian_init(d_in: usize, d_out: usize, std: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "init std must be positive, got {std}"
            )));
        }
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::InvalidConfig(format!("bad init std: {e}")))?;
        let weights =
            Array2::from_shape_fn((d_in, d_out), |_| normal.sample(rng));
        Ok(Self {
            weights,
            biases: Array1::zeros(d_out),
        })
    }

    pub fn d_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(AffineLayer),
    Relu,
    Dropout(DeepDropoutMode),
    SoftmaxXent,
}

/// One batch of dropout scale factors: one row per example, all rows drawn
/// independently from the same law. For multinomial modes `probs` records
/// the sampling probabilities used.
#[derive(Debug, Clone)]
pub struct BatchMask {
    pub scales: Array2<f64>,
    pub probs: Option<Vec<f64>>,
}

/// Cached activations and masks of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer, in layer order; the last entry is the input to
    /// the terminal softmax layer (the logits).
    layer_inputs: Vec<Array2<f64>>,
    probs: Array2<f64>,
    masks: Vec<Option<BatchMask>>,
    loss: Option<f64>,
}

impl ForwardPass {
    pub fn logits(&self) -> &Array2<f64> {
        self.layer_inputs.last().expect("non-empty layer list")
    }

    /// The activation matrix entering layer `idx`.
    pub fn layer_input(&self, idx: usize) -> &Array2<f64> {
        &self.layer_inputs[idx]
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn loss(&self) -> Option<f64> {
        self.loss
    }

    pub fn masks(&self) -> &[Option<BatchMask>] {
        &self.masks
    }

    pub fn batch_size(&self) -> usize {
        self.probs.nrows()
    }

    /// Argmax class per example.
    pub fn predictions(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }
}

/// Gradients for every affine layer, in network order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub affine: Vec<(Array2<f64>, Array1<f64>)>,
}

enum MaskSource<'a> {
    Infer,
    Sample(&'a mut ChaCha8Rng),
    Forced(&'a [Array2<f64>]),
}

#[derive(Debug, Clone)]
pub struct FeedForwardNet {
    layers: Vec<Layer>,
}

impl FeedForwardNet {
    /// Validates the layer list: chained affine dimensions and exactly one
    /// softmax cross-entropy layer, in terminal position.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("empty layer list".into()));
        }
        let softmax_count = layers
            .iter()
            .filter(|l| matches!(l, Layer::SoftmaxXent))
            .count();
        if softmax_count != 1 || !matches!(layers.last(), Some(Layer::SoftmaxXent)) {
            return Err(Error::InvalidConfig(
                "network needs exactly one terminal softmax cross-entropy layer".into(),
            ));
        }
        let mut current: Option<usize> = None;
        for layer in &layers {
            if let Layer::Affine(a) = layer {
                if a.d_in() == 0 || a.d_out() == 0 {
                    return Err(Error::InvalidConfig("affine layer with zero dim".into()));
                }
                if a.biases.len() != a.d_out() {
                    return Err(Error::DimensionMismatch {
                        expected: a.d_out(),
                        got: a.biases.len(),
                    });
                }
                if let Some(c) = current {
                    if c != a.d_in() {
                        return Err(Error::DimensionMismatch {
                            expected: c,
                            got: a.d_in(),
                        });
                    }
                }
                current = Some(a.d_out());
            }
        }
        Ok(Self { layers })
    }

    /// The classic dense stack: affine → ReLU (→ dropout) per hidden layer,
    /// a final affine, then softmax cross-entropy. Dropout, when given,
    /// follows every hidden ReLU.
    pub fn dense(
        dims: &[usize],
        dropout: Option<&DeepDropoutMode>,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least input and output dimensions".into(),
            ));
        }
        let mut layers = Vec::new();
        for w in 0..dims.len() - 1 {
            layers.push(Layer::Affine(AffineLayer::gaussian_init(
                dims[w],
                dims[w + 1],
                init_std,
                rng,
            )?));
            if w + 2 < dims.len() {
                layers.push(Layer::Relu);
                if let Some(mode) = dropout {
                    layers.push(Layer::Dropout(mode.clone()));
                }
            }
        }
        layers.push(Layer::SoftmaxXent);
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Affine(a) => Some(a.d_in()),
            _ => None,
        })
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Affine(a) => Some(a.d_out()),
            _ => None,
        })
    }

    fn forward_impl(
        &self,
        x: ArrayView2<'_, f64>,
        labels: Option<&[usize]>,
        mut source: MaskSource<'_>,
    ) -> Result<ForwardPass> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(d) = self.input_dim() {
            if x.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.ncols(),
                });
            }
        }
        if let Some(labels) = labels {
            if labels.len() != x.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: x.nrows(),
                    got: labels.len(),
                });
            }
        }
        let mut forced = match &source {
            MaskSource::Forced(m) => m.iter(),
            _ => [].iter(),
        };
        let mut current = x.to_owned();
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut masks: Vec<Option<BatchMask>> = (0..self.layers.len()).map(|_| None).collect();
        for (idx, layer) in self.layers.iter().enumerate() {
            layer_inputs.push(current.clone());
            match layer {
                Layer::Affine(a) => {
                    current = current.dot(&a.weights) + &a.biases;
                }
                Layer::Relu => {
                    current.mapv_inplace(|v| v.max(0.0));
                }
                Layer::Dropout(mode) => match &mut source {
                    MaskSource::Infer => {}
                    MaskSource::Sample(rng) => {
                        let mask = sample_batch_mask(mode, current.view(), rng)?;
                        current.zip_mut_with(&mask.scales, |a, &s| *a *= s);
                        masks[idx] = Some(mask);
                    }
                    MaskSource::Forced(_) => {
                        let scales = forced.next().ok_or_else(|| {
                            Error::InvalidConfig(
                                "fewer forced masks than dropout layers".into(),
                            )
                        })?;
                        if scales.dim() != current.dim() {
                            return Err(Error::DimensionMismatch {
                                expected: current.ncols(),
                                got: scales.ncols(),
                            });
                        }
                        current.zip_mut_with(scales, |a, &s| *a *= s);
                        masks[idx] = Some(BatchMask {
                            scales: scales.clone(),
                            probs: None,
                        });
                    }
                },
                Layer::SoftmaxXent => {
                    // Terminal marker; `current` is the logits.
                }
            }
        }
        if matches!(source, MaskSource::Forced(_)) && forced.next().is_some() {
            return Err(Error::InvalidConfig(
                "more forced masks than dropout layers".into(),
            ));
        }
        let logits = layer_inputs.last().expect("at least the softmax layer");
        let (probs, loss) = softmax_xent(logits.view(), labels)?;
        Ok(ForwardPass {
            layer_inputs,
            probs,
            masks,
            loss,
        })
    }

    /// Training-mode forward: dropout layers sample fresh masks.
    pub fn forward_train(
        &self,
        x: ArrayView2<'_, f64>,
        labels: Option<&[usize]>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        self.forward_impl(x, labels, MaskSource::Sample(rng))
    }

    /// Inference-mode forward: dropout layers are the identity.
    pub fn forward_infer(
        &self,
        x: ArrayView2<'_, f64>,
        labels: Option<&[usize]>,
    ) -> Result<ForwardPass> {
        self.forward_impl(x, labels, MaskSource::Infer)
    }

    /// Training-mode forward with externally fixed masks, one matrix per
    /// dropout layer in order. Used by the gradient checker and tests.
    pub fn forward_with_masks(
        &self,
        x: ArrayView2<'_, f64>,
        labels: Option<&[usize]>,
        masks: &[Array2<f64>],
    ) -> Result<ForwardPass> {
        self.forward_impl(x, labels, MaskSource::Forced(masks))
    }

    /// Backpropagation through the cached pass. Dropout layers multiply the
    /// upstream gradient by their mask; the sampling probabilities are
    /// constants. ReLU uses derivative zero at exactly zero.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        if pass.layer_inputs.len() != self.layers.len() {
            return Err(Error::InvalidConfig(
                "forward cache does not match this network".into(),
            ));
        }
        let m = pass.probs.nrows();
        if labels.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: labels.len(),
            });
        }
        let classes = pass.probs.ncols();
        for &y in labels {
            if y >= classes {
                return Err(Error::InvalidConfig(format!(
                    "label {y} out of range for {classes} classes"
                )));
            }
        }
        // d(mean xent)/d(logits) = (softmax - onehot) / m.
        let mut grad = pass.probs.clone();
        for (j, &y) in labels.iter().enumerate() {
            grad[(j, y)] -= 1.0;
        }
        grad.mapv_inplace(|v| v / m as f64);

        let mut affine_grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &pass.layer_inputs[idx];
            match layer {
                Layer::SoftmaxXent => {}
                Layer::Affine(a) => {
                    if input.nrows() != m || input.ncols() != a.d_in() {
                        return Err(Error::InvalidConfig(
                            "forward cache does not match this network".into(),
                        ));
                    }
                    let dw = input.t().dot(&grad);
                    let db = grad.sum_axis(Axis(0));
                    grad = grad.dot(&a.weights.t());
                    affine_grads.push((dw, db));
                }
                Layer::Relu => {
                    grad.zip_mut_with(input, |g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
                }
                Layer::Dropout(_) => {
                    if let Some(mask) = &pass.masks[idx] {
                        grad.zip_mut_with(&mask.scales, |g, &s| *g *= s);
                    }
                }
            }
        }
        affine_grads.reverse();
        Ok(Gradients {
            affine: affine_grads,
        })
    }
}

/// Softmax probabilities and, when labels are given, the mean cross-entropy.
fn softmax_xent(
    logits: ArrayView2<'_, f64>,
    labels: Option<&[usize]>,
) -> Result<(Array2<f64>, Option<f64>)> {
    let (m, classes) = logits.dim();
    let mut probs = logits.to_owned();
    let mut losses = labels.map(|_| Vec::with_capacity(m));
    for (j, mut row) in probs.rows_mut().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + row
                .iter()
                .map(|&z| (z - max).exp())
                .sum::<f64>()
                .ln();
        if let (Some(losses), Some(labels)) = (&mut losses, labels) {
            let y = labels[j];
            if y >= classes {
                return Err(Error::InvalidConfig(format!(
                    "label {y} out of range for {classes} classes"
                )));
            }
            losses.push(lse - row[y]);
        }
        row.mapv_inplace(|z| (z - lse).exp());
    }
    let loss = losses.map(|l| {
        let mut acc = KahanSum::new();
        for v in &l {
            acc.add(*v);
        }
        acc.value() / m as f64
    });
    Ok((probs, loss))
}

/// Draws one batch mask for a dropout layer from its mode.
///
/// An all-zero batch makes the evolutional probabilities undefined; the
/// layer falls back to uniform probabilities for that batch and warns.
pub fn sample_batch_mask(
    mode: &DeepDropoutMode,
    activations: ArrayView2<'_, f64>,
    rng: &mut ChaCha8Rng,
) -> Result<BatchMask> {
    let (m, d) = activations.dim();
    match mode {
        DeepDropoutMode::Standard { delta } => {
            let spec = StandardDropoutSpec::new(*delta)?;
            let mut scales = Array2::zeros((m, d));
            for mut row in scales.rows_mut() {
                let v = sample_standard_mask(&spec, d, rng);
                for (slot, s) in row.iter_mut().zip(v) {
                    *slot = s;
                }
            }
            Ok(BatchMask {
                scales,
                probs: None,
            })
        }
        DeepDropoutMode::UniformMultinomial { trials } => {
            let dist = SamplingDistribution::uniform(d, *trials)?;
            multinomial_batch(&dist, m, rng)
        }
        DeepDropoutMode::Evolutional { trials } => {
            let probs = match minibatch_probs(activations) {
                Ok(p) => p,
                Err(Error::DegenerateDistribution) => {
                    log::warn!(
                        "evolutional dropout saw an all-zero batch; falling back to uniform probabilities"
                    );
                    vec![1.0 / d as f64; d]
                }
                Err(e) => return Err(e),
            };
            let dist = SamplingDistribution::new(probs, *trials)?;
            multinomial_batch(&dist, m, rng)
        }
    }
}

fn multinomial_batch(
    dist: &SamplingDistribution,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BatchMask> {
    let d = dist.dim();
    let mut scales = Array2::zeros((batch, d));
    for mut row in scales.rows_mut() {
        let mask = sample_mask(dist, rng);
        for (slot, &s) in row.iter_mut().zip(mask.scale()) {
            *slot = s;
        }
    }
    Ok(BatchMask {
        scales,
        probs: Some(dist.probs().to_vec()),
    })
}

/// Velocity state for SGD with momentum.
#[derive(Debug, Clone)]
pub struct MomentumState {
    velocity: Vec<(Array2<f64>, Array1<f64>)>,
    mu: f64,
}

impl MomentumState {
    pub fn new(net: &FeedForwardNet, mu: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {mu}"
            )));
        }
        let velocity = net
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Affine(a) => Some((
                    Array2::zeros((a.d_in(), a.d_out())),
                    Array1::zeros(a.d_out()),
                )),
                _ => None,
            })
            .collect();
        Ok(Self { velocity, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// `v <- mu v - eta g; theta <- theta + v` for every affine parameter.
pub fn sgd_momentum_update(
    net: &mut FeedForwardNet,
    grads: &Gradients,
    state: &mut MomentumState,
    eta: f64,
) -> Result<()> {
    let affine_count = net
        .layers
        .iter()
        .filter(|l| matches!(l, Layer::Affine(_)))
        .count();
    if grads.affine.len() != affine_count || state.velocity.len() != affine_count {
        return Err(Error::InvalidConfig(
            "gradient or momentum state does not match the network".into(),
        ));
    }
    let mut slot = 0;
    for layer in net.layers.iter_mut() {
        if let Layer::Affine(a) = layer {
            let (dw, db) = &grads.affine[slot];
            let (vw, vb) = &mut state.velocity[slot];
            if dw.dim() != a.weights.dim() || db.len() != a.biases.len() {
                return Err(Error::DimensionMismatch {
                    expected: a.weights.len(),
                    got: dw.len(),
                });
            }
            vw.zip_mut_with(dw, |v, &g| *v = state.mu * *v - eta * g);
            a.weights.zip_mut_with(vw, |w, &v| *w += v);
            vb.zip_mut_with(db, |v, &g| *v = state.mu * *v - eta * g);
            a.biases.zip_mut_with(vb, |b, &v| *b += v);
            slot += 1;
        }
    }
    Ok(())
}

/// Clean-feature evaluation: argmax 0/1 error (exact integer count) and
/// mean cross-entropy.
pub fn evaluate_deep(
    net: &FeedForwardNet,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, f64)> {
    let pass = net.forward_infer(x, Some(labels))?;
    let predictions = pass.predictions();
    let errors = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p != y)
        .count();
    Ok((
        errors as f64 / labels.len() as f64,
        pass.loss().expect("labels given"),
    ))
}

#[derive(Debug, Clone)]
pub struct DeepTrainOptions {
    pub epochs: u64,
    pub batch_size: usize,
    /// Step size per epoch (1-based).
    pub schedule: StepSizeSchedule,
    pub momentum: f64,
    pub init_std: f64,
    /// Evaluation cadence in epochs; the final epoch is always evaluated.
    pub eval_every: u64,
    pub clock: ClockMode,
}

impl Default for DeepTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            schedule: StepSizeSchedule::Constant(0.1),
            momentum: 0.9,
            init_std: 0.01,
            eval_every: 1,
            clock: ClockMode::Disabled,
        }
    }
}

fn dataset_to_arrays(data: &Dataset, classes: usize) -> Result<(Array2<f64>, Vec<usize>)> {
    let (x, raw_labels) = data.to_dense_matrix();
    let labels = raw_labels
        .into_iter()
        .map(|y| {
            if y < 0 || y as usize >= classes {
                Err(Error::InvalidConfig(format!(
                    "label {y} out of range for {classes} classes"
                )))
            } else {
                Ok(y as usize)
            }
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok((x, labels))
}

/// Trains a dense network by mini-batch SGD with momentum.
///
/// One shuffle per epoch from the seeded source, last partial batch kept,
/// fresh masks per batch. Initialization, shuffling and mask sampling use
/// separate streams of the seed so runs differing only in the mask law see
/// identical parameter initialization and batch order.
pub fn train_deep(
    dims: &[usize],
    mode: &DeepDropoutMode,
    train: &Dataset,
    test: Option<&Dataset>,
    opts: &DeepTrainOptions,
    seed: u64,
) -> Result<(FeedForwardNet, TrainingTrace)> {
    if opts.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    if opts.eval_every == 0 {
        return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
    }
    opts.schedule.validate()?;
    let classes = *dims.last().ok_or_else(|| {
        Error::InvalidConfig("need at least input and output dimensions".into())
    })?;
    if dims.first() != Some(&train.dim()) {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: *dims.first().unwrap_or(&0),
        });
    }
    let (x_train, y_train) = dataset_to_arrays(train, classes)?;
    let test_arrays = test.map(|t| dataset_to_arrays(t, classes)).transpose()?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle_rng.set_stream(1);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    mask_rng.set_stream(2);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(3);

    let mut net = FeedForwardNet::dense(dims, Some(mode), opts.init_std, &mut init_rng)?;
    let mut momentum = MomentumState::new(&net, opts.momentum)?;
    let clock = RunClock::start(opts.clock);
    let mut trace = TrainingTrace::new();

    let record = |net: &FeedForwardNet, epoch: u64, trace: &mut TrainingTrace| -> Result<()> {
        let (train_err, train_loss) = evaluate_deep(net, x_train.view(), &y_train)?;
        let (test_err, test_loss) = match &test_arrays {
            Some((xt, yt)) => evaluate_deep(net, xt.view(), yt)?,
            None => (f64::NAN, f64::NAN),
        };
        trace.push(TraceRow {
            step: epoch,
            train_err,
            train_loss,
            test_err,
            test_loss,
            elapsed_ms: clock.elapsed_ms(),
        })
    };

    record(&net, 0, &mut trace)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=opts.epochs {
        let eta = opts.schedule.at(epoch);
        order.shuffle(&mut shuffle_rng);
        for batch_idx in order.chunks(opts.batch_size) {
            let xb = x_train.select(Axis(0), batch_idx);
            let yb: Vec<usize> = batch_idx.iter().map(|&i| y_train[i]).collect();
            let pass = net.forward_train(xb.view(), Some(&yb), &mut mask_rng)?;
            let grads = net.backward(&pass, &yb)?;
            sgd_momentum_update(&mut net, &grads, &mut momentum, eta)?;
        }
        if epoch % opts.eval_every == 0 || epoch == opts.epochs {
            record(&net, epoch, &mut trace)?;
        }
    }
    Ok((net, trace))
}
