//! The online loop: at each interval, re-estimate the optimal number of
//! optimization steps by early-stopping the previous interval against the
//! current one, fold it into a running mean, take that many passes on the
//! newest observed interval, and predict the upcoming cross-section.
//!
//! The state deliberately retains the early-stopped weights (the restricted
//! optimum), never the prediction weights: prediction weights are a
//! temporary extrapolation whose step count is the regularizer.

use ndarray::{Array1, ArrayView2, Axis};

use crate::earlystop::{early_stopping, StopConfig};
use crate::error::{Error, Result};
use crate::nn::{
    forward_eval, loss_and_gradient, AdamState, LossConfig, Topology, WeightSet,
};
use crate::panel::PanelSlice;
use crate::rng::{derive_seed, SeedStream};

/// Rounds the running step-count mean to the nearest integer, halves up.
pub fn round_half_up(tau: f64) -> usize {
    (tau + 0.5).floor() as usize
}

/// Tracker carried across intervals by one chain.
#[derive(Debug, Clone)]
pub struct OnlineState {
    /// Early-stopped weights through the last observed interval.
    pub theta_star: WeightSet,
    /// Running mean of observed optimal step counts.
    pub tau_mean: f64,
    /// Interval counter; the first step runs at t = 2.
    pub t: usize,
    /// Every observed tau' in order.
    pub tau_history: Vec<usize>,
}

impl OnlineState {
    pub fn new(theta0: WeightSet) -> Self {
        Self {
            theta_star: theta0,
            tau_mean: 0.0,
            t: 2,
            tau_history: Vec::new(),
        }
    }

    /// Recursive mean update: `tau <- (tau * (t-2) + tau') / (t-1)`.
    /// Exposed so the step-count arithmetic can be exercised directly.
    ///
    /// Evaluated from the exact integer sum of the history: the recursion
    /// is the running mean, and the sum form keeps `tau_mean * count` within
    /// one division's rounding of the sum instead of drifting across
    /// hundreds of incremental updates.
    pub fn record_tau(&mut self, tau_prime: usize) {
        self.tau_history.push(tau_prime);
        let sum: usize = self.tau_history.iter().sum();
        self.tau_mean = sum as f64 / self.tau_history.len() as f64;
    }
}

/// Per-interval record emitted by [`oes_step`].
#[derive(Debug, Clone)]
pub struct FitReport {
    pub t: usize,
    /// Optimal steps found by early stopping this interval.
    pub tau_prime: usize,
    /// Passes actually applied to the prediction weights.
    pub passes_used: usize,
    /// Running mean after this interval.
    pub tau_mean: f64,
    /// Best validation loss seen by early stopping.
    pub val_loss: f64,
    /// Predictions for the upcoming interval.
    pub prediction: Array1<f64>,
    /// `eta * |tau' - passes| * ||grad J(theta*)||`, zero when the rounded
    /// mean equals the interval's optimal step count.
    pub gradient_deficit: f64,
    /// Prediction weights, for replay/importance; dropped by default.
    pub theta_t: Option<WeightSet>,
}

/// One turn of the online loop.
///
/// `train` is the interval before last (t-2), `val` the last observed
/// interval (t-1), `x_next` the upcoming feature matrix (t). Realized
/// returns for t are deliberately not part of the signature. The state
/// advances to hold the early-stopped weights through t-1.
#[allow(clippy::too_many_arguments)]
pub fn oes_step(
    topo: &Topology,
    state: &mut OnlineState,
    train: &PanelSlice,
    val: &PanelSlice,
    x_next: ArrayView2<f64>,
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    stream: &mut SeedStream,
) -> Result<FitReport> {
    if train.num_features() != val.num_features()
        || train.num_features() != x_next.ncols()
        || x_next.ncols() != topo.input_dim
    {
        return Err(Error::DimensionMismatch(
            "oes_step: feature dimensions disagree".into(),
        ));
    }

    // (i) Solve the restricted optimum on (t-2, t-1).
    let es = early_stopping(
        topo,
        &state.theta_star,
        train.x.view(),
        train.r.view(),
        val.x.view(),
        val.r.view(),
        stop,
        loss_cfg,
        stream,
        None,
    )?;
    if es.diverged {
        return Err(Error::Diverged(format!(
            "early stopping diverged at interval t={}",
            state.t
        )));
    }
    let tau_prime = es.tau_best;
    state.theta_star = es.weights_best;

    // (ii) Recursive mean.
    state.record_tau(tau_prime);
    let passes = round_half_up(state.tau_mean);

    // (iii) Prediction weights: `passes` mini-batched ADAM passes over the
    // last observed interval, fresh optimizer state, no validation checks.
    let mut theta_t = state.theta_star.clone();
    if passes > 0 {
        let mut adam = AdamState::new(topo);
        let mut order: Vec<usize> = (0..val.len()).collect();
        for _ in 0..passes {
            stream.shuffle(&mut order);
            for chunk in order.chunks(stop.batch_size) {
                let xb = val.x.select(Axis(0), chunk);
                let rb = val.r.select(Axis(0), chunk);
                let (_, grads) =
                    loss_and_gradient(topo, &mut theta_t, xb.view(), rb.view(), loss_cfg)?;
                adam.step(&mut theta_t, &grads, stop.step_size)?;
            }
        }
    }

    // (iv) Predict the upcoming interval in eval mode.
    let prediction = forward_eval(topo, &theta_t, x_next)?;

    // Diagnostic: how far the applied pass count sits from this interval's
    // optimum, in gradient-norm units (pure-MSE gradient at theta*).
    let gradient_deficit = {
        let mut probe = state.theta_star.clone();
        let (_, grads) = loss_and_gradient(
            topo,
            &mut probe,
            val.x.view(),
            val.r.view(),
            &LossConfig::mse_only(),
        )?;
        stop.step_size * (tau_prime as f64 - passes as f64).abs() * grads.norm()
    };

    let report = FitReport {
        t: state.t,
        tau_prime,
        passes_used: passes,
        tau_mean: state.tau_mean,
        val_loss: es.val_trace[tau_prime],
        prediction,
        gradient_deficit,
        theta_t: Some(theta_t),
    };
    state.t += 1;
    Ok(report)
}

/// A full single-seed chain over a panel sequence (by position: the chain
/// starts predicting at position 2).
pub struct ChainResult {
    pub seed: u64,
    /// (interval id, prediction vector) per predicted interval.
    pub predictions: Vec<(usize, Array1<f64>)>,
    pub reports: Vec<FitReport>,
}

/// Runs one chain. `keep_weights` retains prediction weights inside each
/// report for replay.
pub fn oes_chain(
    topo: &Topology,
    panels: &[PanelSlice],
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    seed: u64,
    keep_weights: bool,
) -> Result<ChainResult> {
    if panels.len() < 3 {
        return Err(Error::InvalidConfig(
            "online run needs at least 3 intervals".into(),
        ));
    }
    let mut stream = SeedStream::new(seed);
    let theta0 = WeightSet::init(topo, &mut stream);
    let mut state = OnlineState::new(theta0);
    let mut predictions = Vec::with_capacity(panels.len() - 2);
    let mut reports = Vec::with_capacity(panels.len() - 2);
    for p in 2..panels.len() {
        let mut report = oes_step(
            topo,
            &mut state,
            &panels[p - 2],
            &panels[p - 1],
            panels[p].x.view(),
            stop,
            loss_cfg,
            &mut stream,
        )?;
        predictions.push((panels[p].t, report.prediction.clone()));
        if !keep_weights {
            report.theta_t = None;
        }
        reports.push(report);
    }
    Ok(ChainResult {
        seed,
        predictions,
        reports,
    })
}

/// Ensemble run: independent chains from distinct seeds, predictions
/// averaged per interval.
pub struct OesRunResult {
    pub member_seeds: Vec<u64>,
    /// Ensemble-mean prediction per interval.
    pub predictions: Vec<(usize, Array1<f64>)>,
    pub members: Vec<ChainResult>,
    /// Per interval, each member's prediction weights (when requested).
    pub snapshots: Option<Vec<(usize, Vec<WeightSet>)>>,
}

/// Derives `count` member seeds from a base seed.
pub fn member_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(base, i)).collect()
}

pub fn oes_run(
    topo: &Topology,
    panels: &[PanelSlice],
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    seeds: &[u64],
    keep_snapshots: bool,
) -> Result<OesRunResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("ensemble needs at least one seed".into()));
    }
    let mut members = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        members.push(oes_chain(topo, panels, stop, loss_cfg, seed, keep_snapshots)?);
    }

    let n_steps = members[0].predictions.len();
    let mut predictions = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let t = members[0].predictions[i].0;
        let mut acc = members[0].predictions[i].1.clone();
        for m in &members[1..] {
            acc += &m.predictions[i].1;
        }
        acc /= members.len() as f64;
        predictions.push((t, acc));
    }

    let snapshots = if keep_snapshots {
        let mut snaps = Vec::with_capacity(n_steps);
        for i in 0..n_steps {
            let t = members[0].predictions[i].0;
            let weights: Vec<WeightSet> = members
                .iter()
                .map(|m| {
                    m.reports[i]
                        .theta_t
                        .clone()
                        .expect("weights kept when snapshots requested")
                })
                .collect();
            snaps.push((t, weights));
        }
        Some(snaps)
    } else {
        None
    };

    Ok(OesRunResult {
        member_seeds: seeds.to_vec(),
        predictions,
        members,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    #[test]
    fn rounding_table() {
        assert_eq!(round_half_up(0.4), 0);
        assert_eq!(round_half_up(0.5), 1);
        assert_eq!(round_half_up(3.49), 3);
        assert_eq!(round_half_up(3.5), 4);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn recursive_mean_matches_contract_examples() {
        let topo = Topology::new(1, vec![1], false).unwrap();
        let mut state = OnlineState::new(WeightSet::zeros(&topo));
        // t=2, zero history, tau'=4 -> mean 4.
        state.record_tau(4);
        assert_abs_diff_eq!(state.tau_mean, 4.0, epsilon = 1e-15);
        state.t = 3;
        // t=3, tau'=2 -> (4*1 + 2)/2 = 3.
        state.record_tau(2);
        assert_abs_diff_eq!(state.tau_mean, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn recursive_mean_identity_over_random_sequences() {
        let mut stream = SeedStream::new(6);
        for _ in 0..200 {
            let topo = Topology::new(1, vec![1], false).unwrap();
            let mut state = OnlineState::new(WeightSet::zeros(&topo));
            let n = 1 + (stream.next_u64() % 50) as usize;
            for _ in 0..n {
                let tau = (stream.next_u64() % 40) as usize;
                state.record_tau(tau);
                state.t += 1;
            }
            let sum: usize = state.tau_history.iter().sum();
            let count = state.tau_history.len() as f64;
            assert!(
                (state.tau_mean * count - sum as f64).abs() < 1e-12,
                "mean identity violated: {} * {} vs {}",
                state.tau_mean,
                count,
                sum
            );
        }
    }

    /// Stationary slices with identical data: r = 0.5 * relu(x).
    fn identical_slices(count: usize, n: usize) -> Vec<PanelSlice> {
        let mut stream = SeedStream::new(90);
        let mut x = Array2::zeros((n, 1));
        for v in x.iter_mut() {
            *v = stream.uniform_in(0.5, 2.0);
        }
        let r = x.column(0).mapv(|v| 0.5 * v);
        (0..count)
            .map(|t| {
                PanelSlice::new(
                    t,
                    format!("{t}"),
                    (0..n).map(|i| format!("e{i}")).collect(),
                    x.clone(),
                    r.clone(),
                )
                .unwrap()
            })
            .collect()
    }

    fn optimal_weights() -> (Topology, WeightSet) {
        let topo = Topology::new(1, vec![1], false).unwrap();
        let mut w = WeightSet::zeros(&topo);
        w.dense[0].w[(0, 0)] = 1.0;
        w.dense[1].w[(0, 0)] = 0.5;
        (topo, w)
    }

    fn quick_stop() -> StopConfig {
        StopConfig {
            max_iterations: 30,
            tolerance: 1e-6,
            patience: 3,
            step_size: 0.02,
            batch_size: 64,
        }
    }

    #[test]
    fn zero_pass_step_predicts_with_theta_star_exactly() {
        // Already-optimal weights: tau' = 0, mean 0, zero passes, so the
        // prediction is F(X; theta*) bit-for-bit.
        let slices = identical_slices(3, 12);
        let (topo, w) = optimal_weights();
        let mut state = OnlineState::new(w.clone());
        let mut stream = SeedStream::new(1);
        let report = oes_step(
            &topo,
            &mut state,
            &slices[0],
            &slices[1],
            slices[2].x.view(),
            &quick_stop(),
            &LossConfig::mse_only(),
            &mut stream,
        )
        .unwrap();
        assert_eq!(report.tau_prime, 0);
        assert_eq!(report.passes_used, 0);
        assert_eq!(state.theta_star, w);
        let direct = forward_eval(&topo, &w, slices[2].x.view()).unwrap();
        assert_eq!(report.prediction, direct);
        assert_eq!(report.gradient_deficit, 0.0);
        assert_eq!(state.t, 3);
    }

    #[test]
    fn converged_chain_emits_constant_predictions() {
        // Identical data + converged weights: tau' = 0 at every step (three
        // consecutive zeros and beyond), so predictions never change.
        let slices = identical_slices(8, 12);
        let (topo, w) = optimal_weights();
        let mut state = OnlineState::new(w);
        let mut stream = SeedStream::new(2);
        let mut preds = Vec::new();
        for p in 2..slices.len() {
            let report = oes_step(
                &topo,
                &mut state,
                &slices[p - 2],
                &slices[p - 1],
                slices[p].x.view(),
                &quick_stop(),
                &LossConfig::mse_only(),
                &mut stream,
            )
            .unwrap();
            assert_eq!(report.tau_prime, 0);
            preds.push(report.prediction);
        }
        assert!(state.tau_history.iter().all(|&t| t == 0));
        assert!(state.tau_history.len() >= 3);
        for p in &preds[1..] {
            assert_eq!(*p, preds[0]);
        }
    }

    #[test]
    fn step_does_not_mutate_inputs() {
        let slices = identical_slices(3, 10);
        let before: Vec<PanelSlice> = slices.clone();
        let (topo, _) = optimal_weights();
        let mut init_stream = SeedStream::new(8);
        let w = WeightSet::init(&topo, &mut init_stream);
        let mut state = OnlineState::new(w);
        let mut stream = SeedStream::new(3);
        let _ = oes_step(
            &topo,
            &mut state,
            &slices[0],
            &slices[1],
            slices[2].x.view(),
            &quick_stop(),
            &LossConfig::mse_only(),
            &mut stream,
        )
        .unwrap();
        for (a, b) in slices.iter().zip(&before) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.r, b.r);
        }
    }

    /// Stationary linear panel with fresh features per interval.
    fn stationary_linear_panel(count: usize, n: usize, seed: u64) -> Vec<PanelSlice> {
        let mut stream = SeedStream::new(seed);
        (0..count)
            .map(|t| {
                let mut x = Array2::zeros((n, 2));
                for v in x.iter_mut() {
                    *v = stream.normal();
                }
                let r = ndarray::Array1::from_shape_fn(n, |i| {
                    0.7 * x[(i, 0)] - 0.4 * x[(i, 1)]
                });
                PanelSlice::new(
                    t,
                    format!("{t}"),
                    (0..n).map(|i| format!("e{i}")).collect(),
                    x,
                    r,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn chain_improves_on_stationary_target() {
        // T=6, n=10, m=2 stationary linear data: the later prediction should
        // be closer to the truth than the first one on the same chain.
        let panels = stationary_linear_panel(6, 10, 44);
        let topo = Topology::new(2, vec![4], false).unwrap();
        let stop = StopConfig {
            max_iterations: 80,
            tolerance: 1e-5,
            patience: 8,
            step_size: 0.05,
            batch_size: 10,
        };
        let chain = oes_chain(&topo, &panels, &stop, &LossConfig::mse_only(), 7, false).unwrap();
        let mse = |pred: &Array1<f64>, truth: &Array1<f64>| {
            pred.iter()
                .zip(truth.iter())
                .map(|(p, r)| (p - r) * (p - r))
                .sum::<f64>()
                / pred.len() as f64
        };
        let first = mse(&chain.predictions[0].1, &panels[2].r);
        let last = mse(&chain.predictions[3].1, &panels[5].r);
        assert!(
            last < first,
            "expected improvement: first-interval MSE {first}, last {last}"
        );
    }

    #[test]
    fn ensemble_of_identical_seeds_equals_single_member() {
        let panels = stationary_linear_panel(5, 8, 10);
        let topo = Topology::new(2, vec![3], false).unwrap();
        let stop = quick_stop();
        let run = oes_run(
            &topo,
            &panels,
            &stop,
            &LossConfig::mse_only(),
            &[99, 99],
            false,
        )
        .unwrap();
        for (i, (_, p)) in run.predictions.iter().enumerate() {
            assert_eq!(*p, run.members[0].predictions[i].1);
            assert_eq!(*p, run.members[1].predictions[i].1);
        }
    }

    #[test]
    fn single_member_run_equals_chain() {
        let panels = stationary_linear_panel(5, 8, 11);
        let topo = Topology::new(2, vec![3], false).unwrap();
        let stop = quick_stop();
        let run =
            oes_run(&topo, &panels, &stop, &LossConfig::mse_only(), &[5], false).unwrap();
        let chain = oes_chain(&topo, &panels, &stop, &LossConfig::mse_only(), 5, false).unwrap();
        for ((_, a), (_, b)) in run.predictions.iter().zip(&chain.predictions) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn deficit_is_nonnegative_and_zero_on_match() {
        let panels = stationary_linear_panel(6, 10, 21);
        let topo = Topology::new(2, vec![3], false).unwrap();
        let stop = quick_stop();
        let chain = oes_chain(&topo, &panels, &stop, &LossConfig::mse_only(), 3, false).unwrap();
        for r in &chain.reports {
            assert!(r.gradient_deficit >= 0.0);
            if r.tau_prime == r.passes_used {
                assert_eq!(r.gradient_deficit, 0.0);
            }
        }
    }

    #[test]
    fn too_few_intervals_rejected() {
        let panels = stationary_linear_panel(2, 8, 1);
        let topo = Topology::new(2, vec![3], false).unwrap();
        assert!(oes_chain(&topo, &panels, &quick_stop(), &LossConfig::mse_only(), 1, false).is_err());
    }
}
