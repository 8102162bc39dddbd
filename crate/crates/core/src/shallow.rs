//! Stochastic optimization of linear models under dropout noise.
//!
//! Each step draws one example with replacement and one fresh mask, then
//! applies `w <- w - eta * l'(w.(x∘eps), y) * (x∘eps)` for the logistic
//! loss. The running average of the iterates (starting from `w_1 = 0`) is
//! maintained incrementally and is the default reported model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::dropout::{
    data_dependent_probs, MaskLaw, SamplingDistribution, StandardDropoutSpec,
};
use crate::error::{Error, Result};
use crate::trace::{ClockMode, RunClock, TraceRow, TrainingTrace};
use crate::vector::{FeatureVec, KahanSum};

/// The step-size grid used to tune shallow runs; a configuration default,
/// not a constraint.
pub const DEFAULT_STEP_GRID: [f64; 7] = [0.1, 0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001];

/// Step sizes over steps (shallow) or epochs (deep).
#[derive(Debug, Clone, PartialEq)]
pub enum StepSizeSchedule {
    Constant(f64),
    /// `eta(t) = base * prod {factor : drop_at <= t}`.
    Piecewise { base: f64, drops: Vec<(u64, f64)> },
}

impl StepSizeSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            StepSizeSchedule::Constant(eta) => *eta > 0.0,
            StepSizeSchedule::Piecewise { base, drops } => {
                *base > 0.0 && drops.iter().all(|(_, f)| *f > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("step sizes must stay positive".into()))
        }
    }

    pub fn at(&self, t: u64) -> f64 {
        match self {
            StepSizeSchedule::Constant(eta) => *eta,
            StepSizeSchedule::Piecewise { base, drops } => drops
                .iter()
                .filter(|(at, _)| *at <= t)
                .fold(*base, |eta, (_, f)| eta * f),
        }
    }
}

/// Logistic loss `log(1 + exp(-y z))` and its derivative in `z`,
/// overflow-safe at any margin. The derivative magnitude never exceeds 1.
pub fn logistic_loss(z: f64, y: f64) -> (f64, f64) {
    debug_assert!(y == 1.0 || y == -1.0, "label must be +-1, got {y}");
    let yz = y * z;
    let loss = if yz > 0.0 {
        (-yz).exp().ln_1p()
    } else {
        -yz + yz.exp().ln_1p()
    };
    let derivative = if yz > 0.0 {
        let e = (-yz).exp();
        -y * e / (1.0 + e)
    } else {
        -y / (1.0 + yz.exp())
    };
    (loss, derivative)
}

/// A linear model with the running average of its SGD iterates.
///
/// After `t` steps the average equals `(1/t) sum_{s<=t} w_s` where `w_s`
/// is the iterate entering step `s` and `w_1 = 0`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    weights: Vec<f64>,
    averaged: Vec<f64>,
    steps: u64,
    #[cfg(debug_assertions)]
    writes: u64,
}

impl LinearModel {
    pub fn new(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            averaged: vec![0.0; dim],
            steps: 0,
            #[cfg(debug_assertions)]
            writes: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// The last iterate.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The averaged iterate, the default reported model.
    pub fn averaged(&self) -> &[f64] {
        &self.averaged
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Weight-coordinate writes performed by SGD updates; only the support
    /// of the masked example may be touched.
    #[cfg(debug_assertions)]
    pub fn coordinate_writes(&self) -> u64 {
        self.writes
    }
}

/// One SGD step on a masked example: folds the current iterate into the
/// running average, then updates `w` along the masked gradient. Only the
/// support of `x ∘ eps` is written.
pub fn sgd_dropout_step(
    model: &mut LinearModel,
    x: &FeatureVec,
    y: f64,
    scales: &[f64],
    eta: f64,
) -> Result<()> {
    if scales.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: scales.len(),
        });
    }
    if let Some(max) = x.max_index() {
        if max >= model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: max + 1,
            });
        }
    }
    model.steps += 1;
    let t = model.steps as f64;
    for (avg, w) in model.averaged.iter_mut().zip(&model.weights) {
        *avg += (*w - *avg) / t;
    }

    let mut margin = 0.0;
    for (i, v) in x.iter_entries() {
        margin += model.weights[i] * v * scales[i];
    }
    let (_, slope) = logistic_loss(margin, y);
    let coeff = eta * slope;
    if coeff == 0.0 {
        return Ok(());
    }
    for (i, v) in x.iter_entries() {
        let masked = v * scales[i];
        if masked != 0.0 {
            model.weights[i] -= coeff * masked;
            #[cfg(debug_assertions)]
            {
                model.writes += 1;
            }
        }
    }
    Ok(())
}

/// Clean-feature evaluation: 0/1 error with margins of exactly zero
/// counted as errors, and the mean logistic loss.
pub fn evaluate(weights: &[f64], data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = data.binary_labels()?;
    let mut errors = 0u64;
    let mut loss = KahanSum::new();
    for (ex, &y) in data.examples().iter().zip(&labels) {
        let margin = ex.features.dot(weights);
        if y * margin <= 0.0 {
            errors += 1;
        }
        loss.add(logistic_loss(margin, y).0);
    }
    let n = data.len() as f64;
    Ok((errors as f64 / n, loss.value() / n))
}

/// Mask law for shallow training.
#[derive(Debug, Clone, PartialEq)]
pub enum ShallowDropoutMode {
    /// Bernoulli drop with probability `delta`, keep scale `1/(1-delta)`.
    Standard { delta: f64 },
    /// Multinomial sampling with probabilities from the training split's
    /// second moments, computed once up front.
    DataDependent { trials: u64, smoothing: f64 },
    /// Multinomial sampling with uniform probabilities.
    UniformMultinomial { trials: u64 },
}

impl ShallowDropoutMode {
    /// Resolves the mode against a training set into a sampleable law.
    pub fn build_law(&self, train: &Dataset) -> Result<MaskLaw> {
        match self {
            ShallowDropoutMode::Standard { delta } => {
                Ok(MaskLaw::Standard(StandardDropoutSpec::new(*delta)?))
            }
            ShallowDropoutMode::DataDependent { trials, smoothing } => {
                let probs = data_dependent_probs(train.second_moments(), *smoothing)?;
                Ok(MaskLaw::Multinomial(SamplingDistribution::new(
                    probs, *trials,
                )?))
            }
            ShallowDropoutMode::UniformMultinomial { trials } => Ok(MaskLaw::Multinomial(
                SamplingDistribution::uniform(train.dim(), *trials)?,
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShallowTrainOptions {
    pub steps: u64,
    /// Evaluation cadence in steps; the final step is always evaluated.
    pub eval_every: u64,
    pub schedule: StepSizeSchedule,
    /// Evaluate the averaged iterate (default) or the last iterate.
    pub eval_averaged: bool,
    pub clock: ClockMode,
}

impl Default for ShallowTrainOptions {
    fn default() -> Self {
        Self {
            steps: 10_000,
            eval_every: 500,
            schedule: StepSizeSchedule::Constant(0.01),
            eval_averaged: true,
            clock: ClockMode::Disabled,
        }
    }
}

/// Trains a linear model with single-example SGD under the chosen mask law.
///
/// Examples are drawn i.i.d. with replacement; example order and mask draws
/// come from separate seeded streams so compared mask laws see identical
/// data order. Evaluation always uses clean features.
pub fn train_shallow(
    train: &Dataset,
    test: Option<&Dataset>,
    mode: &ShallowDropoutMode,
    opts: &ShallowTrainOptions,
    seed: u64,
) -> Result<(LinearModel, TrainingTrace)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if opts.eval_every == 0 {
        return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
    }
    opts.schedule.validate()?;
    let labels = train.binary_labels()?;
    let law = mode.build_law(train)?;
    let d = train.dim();

    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    data_rng.set_stream(1);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    mask_rng.set_stream(2);

    let clock = RunClock::start(opts.clock);
    let mut model = LinearModel::new(d);
    let mut trace = TrainingTrace::new();

    let record = |model: &LinearModel, step: u64, trace: &mut TrainingTrace| -> Result<()> {
        let w = if opts.eval_averaged {
            model.averaged()
        } else {
            model.weights()
        };
        let (train_err, train_loss) = evaluate(w, train)?;
        let (test_err, test_loss) = match test {
            Some(t) => evaluate(w, t)?,
            None => (f64::NAN, f64::NAN),
        };
        trace.push(TraceRow {
            step,
            train_err,
            train_loss,
            test_err,
            test_loss,
            elapsed_ms: clock.elapsed_ms(),
        })
    };

    record(&model, 0, &mut trace)?;
    for t in 1..=opts.steps {
        let idx = data_rng.random_range(0..train.len());
        let scales = law.sample_scales(d, &mut mask_rng)?;
        let eta = opts.schedule.at(t);
        sgd_dropout_step(
            &mut model,
            &train.examples()[idx].features,
            labels[idx],
            &scales,
            eta,
        )?;
        if t % opts.eval_every == 0 || t == opts.steps {
            record(&model, t, &mut trace)?;
        }
    }
    Ok((model, trace))
}

/// Outcome of a step-size grid search.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub step_size: f64,
    pub model: LinearModel,
    pub trace: TrainingTrace,
}

/// Runs the grid with a constant schedule per entry and keeps the run with
/// the lowest final training loss (earlier grid entries win ties).
pub fn train_shallow_grid(
    train: &Dataset,
    test: Option<&Dataset>,
    mode: &ShallowDropoutMode,
    opts: &ShallowTrainOptions,
    seed: u64,
    grid: &[f64],
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty step-size grid".into()));
    }
    let mut best: Option<GridOutcome> = None;
    for &eta in grid {
        let run_opts = ShallowTrainOptions {
            schedule: StepSizeSchedule::Constant(eta),
            ..opts.clone()
        };
        let (model, trace) = train_shallow(train, test, mode, &run_opts, seed)?;
        let loss = trace.last().map(|r| r.train_loss).unwrap_or(f64::INFINITY);
        let better = match &best {
            None => true,
            Some(b) => {
                let b_loss = b.trace.last().map(|r| r.train_loss).unwrap_or(f64::INFINITY);
                loss < b_loss
            }
        };
        if better {
            best = Some(GridOutcome {
                step_size: eta,
                model,
                trace,
            });
        }
    }
    Ok(best.expect("non-empty grid always yields a run"))
}

/// Steps-to-target comparison between a baseline trace and a challenger:
/// the target is the baseline's final training loss.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceComparison {
    pub target_loss: f64,
    pub baseline_steps: u64,
    pub challenger_steps: Option<u64>,
    /// `challenger_steps / baseline_steps`; `None` if never reached.
    pub ratio: Option<f64>,
}

pub fn convergence_comparison(
    baseline: &TrainingTrace,
    challenger: &TrainingTrace,
) -> Option<ConvergenceComparison> {
    let last = baseline.last()?;
    let challenger_steps = challenger.steps_to_reach_train_loss(last.train_loss);
    Some(ConvergenceComparison {
        target_loss: last.train_loss,
        baseline_steps: last.step,
        challenger_steps,
        ratio: challenger_steps.map(|s| s as f64 / last.step.max(1) as f64),
    })
}
