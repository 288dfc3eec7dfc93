//! Early stopping: train on one interval while validating on the next,
//! returning the step count and weights that minimized validation loss.
//!
//! The bookkeeping lives in [`StopTracker`], a pure state machine over the
//! validation-loss sequence, so scripted traces can be checked against it
//! directly; [`early_stopping`] wires it to actual mini-batched ADAM training.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::{loss_and_gradient, validation_mse, AdamState, LossConfig, Topology, WeightSet};
use crate::rng::SeedStream;

/// Knobs for one early-stopping run.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StopConfig {
    /// Maximum optimization iterations (full passes over the training data).
    pub max_iterations: usize,
    /// Minimum improvement that resets the patience counter.
    pub tolerance: f64,
    /// Consecutive sub-tolerance iterations allowed before stopping.
    pub patience: usize,
    /// ADAM step size.
    pub step_size: f64,
    /// Mini-batch size; the training interval is shuffled and chunked.
    pub batch_size: usize,
}

impl StopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations, patience and batch_size must be positive".into(),
            ));
        }
        if !(self.tolerance > 0.0) || !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig(
                "tolerance and step_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What the tracker wants after observing one validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    /// Patience exhausted; assume convergence.
    Stop,
}

/// Pure early-stopping bookkeeping over a validation-loss sequence.
///
/// The loss observed before the first training step seeds the best value, so
/// a step count of zero is admissible. Each subsequent observation is
/// compared against the best loss as it stood before the observation: an
/// improvement of at least `tolerance` resets the patience counter, anything
/// less increments it.
#[derive(Debug, Clone)]
pub struct StopTracker {
    tolerance: f64,
    patience: usize,
    counter: usize,
    step: usize,
    best_step: usize,
    best_loss: f64,
    trace: Vec<f64>,
}

impl StopTracker {
    /// `initial_loss` is the validation loss at the starting weights.
    pub fn new(initial_loss: f64, tolerance: f64, patience: usize) -> Self {
        Self {
            tolerance,
            patience,
            counter: 0,
            step: 0,
            best_step: 0,
            best_loss: initial_loss,
            trace: vec![initial_loss],
        }
    }

    /// Observe the validation loss after one more training iteration.
    /// Returns `(is_new_best, decision)`.
    pub fn observe(&mut self, loss: f64) -> (bool, StopDecision) {
        self.step += 1;
        self.trace.push(loss);
        let improvement = self.best_loss - loss;
        let is_best = loss < self.best_loss;
        if is_best {
            self.best_step = self.step;
            self.best_loss = loss;
        }
        let decision = if improvement < self.tolerance {
            self.counter += 1;
            if self.counter >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        } else {
            self.counter = 0;
            StopDecision::Continue
        };
        (is_best, decision)
    }

    pub fn best_step(&self) -> usize {
        self.best_step
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn steps_observed(&self) -> usize {
        self.step
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }
}

/// Outcome of one early-stopping run.
#[derive(Debug, Clone)]
pub struct StopResult {
    /// Iteration count that minimized validation loss (0 = starting weights).
    pub tau_best: usize,
    /// Weights as of `tau_best`, retained bit-identically.
    pub weights_best: WeightSet,
    /// Validation loss before training plus one entry per iteration run.
    pub val_trace: Vec<f64>,
    /// True when training was aborted on a non-finite loss.
    pub diverged: bool,
}

/// One row per iteration for the optional CSV trace: (k, train, val, best).
pub type TraceRow = (usize, f64, f64, bool);

/// Train on `(x_train, r_train)` while validating on `(x_val, r_val)`.
///
/// Each iteration shuffles the training rows with `stream`, runs ADAM over
/// `batch_size` chunks, then scores eval-mode MSE on the validation split.
/// Validation happens once before the first iteration so the starting
/// weights can win. A fresh ADAM state is used for the whole run.
#[allow(clippy::too_many_arguments)]
pub fn early_stopping(
    topo: &Topology,
    theta0: &WeightSet,
    x_train: ArrayView2<f64>,
    r_train: ArrayView1<f64>,
    x_val: ArrayView2<f64>,
    r_val: ArrayView1<f64>,
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    stream: &mut SeedStream,
    mut trace_sink: Option<&mut Vec<TraceRow>>,
) -> Result<StopResult> {
    stop.validate()?;
    if x_train.ncols() != x_val.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "train has {} features, validation has {}",
            x_train.ncols(),
            x_val.ncols()
        )));
    }

    let mut weights = theta0.clone();
    // A network that has never seen data scores validation loss with batch
    // statistics unavailable; warm the running statistics on the training
    // interval without touching parameters.
    if topo.batch_norm && !weights.stats_ready {
        crate::nn::forward_train(topo, &mut weights, x_train)?;
    }

    let initial = validation_mse(topo, &weights, x_val, r_val)?;
    let mut tracker = StopTracker::new(initial, stop.tolerance, stop.patience);
    let mut best = weights.clone();
    let mut adam = AdamState::new(topo);
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();

    for k in 1..=stop.max_iterations {
        stream.shuffle(&mut order);
        let mut train_loss_sum = 0.0;
        let mut batches = 0usize;
        let mut diverged = false;
        for chunk in order.chunks(stop.batch_size) {
            let xb = x_train.select(Axis(0), chunk);
            let rb = r_train.select(Axis(0), chunk);
            match loss_and_gradient(topo, &mut weights, xb.view(), rb.view(), loss_cfg) {
                Ok((loss, grads)) => {
                    train_loss_sum += loss;
                    batches += 1;
                    adam.step(&mut weights, &grads, stop.step_size)?;
                }
                Err(Error::Diverged(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if diverged || !weights.all_finite() {
            return Ok(StopResult {
                tau_best: tracker.best_step(),
                weights_best: best,
                val_trace: tracker.trace().to_vec(),
                diverged: true,
            });
        }
        let val_loss = match validation_mse(topo, &weights, x_val, r_val) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(Error::NonFinite(_)) => {
                return Ok(StopResult {
                    tau_best: tracker.best_step(),
                    weights_best: best,
                    val_trace: tracker.trace().to_vec(),
                    diverged: true,
                })
            }
            Err(e) => return Err(e),
        };
        let (is_best, decision) = tracker.observe(val_loss);
        if is_best {
            best = weights.clone();
        }
        if let Some(sink) = trace_sink.as_mut() {
            sink.push((k, train_loss_sum / batches.max(1) as f64, val_loss, is_best));
        }
        if decision == StopDecision::Stop {
            break;
        }
    }

    Ok(StopResult {
        tau_best: tracker.best_step(),
        weights_best: best,
        val_trace: tracker.trace().to_vec(),
        diverged: false,
    })
}

/// Convenience wrapper taking matrices directly from panel slices.
pub fn early_stopping_on_slices(
    topo: &Topology,
    theta0: &WeightSet,
    train: (&Array2<f64>, &Array1<f64>),
    val: (&Array2<f64>, &Array1<f64>),
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    stream: &mut SeedStream,
) -> Result<StopResult> {
    early_stopping(
        topo,
        theta0,
        train.0.view(),
        train.1.view(),
        val.0.view(),
        val.1.view(),
        stop,
        loss_cfg,
        stream,
        None,
    )
}
