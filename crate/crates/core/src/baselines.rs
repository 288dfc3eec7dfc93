//! Comparison trainers: the pooled expanding-window network (periodically
//! refit, frozen in between) and time-smoothed SGD (one weight update per
//! interval from a forget-factor-weighted buffer of past gradients).

use std::collections::VecDeque;

use ndarray::Array1;

use crate::earlystop::{early_stopping, StopConfig};
use crate::error::{Error, Result};
use crate::nn::{forward_eval, loss_and_gradient, Gradients, LossConfig, Topology, WeightSet};
use crate::panel::{pool, PanelSlice};
use crate::rng::{derive_seed, SeedStream};

/// Walk-forward schedule over sequence positions. The initial training block
/// is `[train_start, train_end)`, validation `[train_end, val_end)`, and
/// out-of-sample everything from `val_end` on. At each refit both windows
/// advance by `refit_every`; the training window keeps its start pinned when
/// `expanding`, otherwise it rolls.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct WindowSchedule {
    pub train_start: usize,
    pub train_end: usize,
    pub val_end: usize,
    pub refit_every: usize,
    pub expanding: bool,
}

impl WindowSchedule {
    pub fn validate(&self, total: usize) -> Result<()> {
        if !(self.train_start < self.train_end && self.train_end < self.val_end) {
            return Err(Error::InvalidConfig(format!(
                "schedule ranges must be chronological: train [{}, {}), val [{}, {})",
                self.train_start, self.train_end, self.train_end, self.val_end
            )));
        }
        if self.val_end >= total {
            return Err(Error::InvalidConfig(format!(
                "no out-of-sample range: val_end {} covers all {total} intervals",
                self.val_end
            )));
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidConfig("refit_every must be >= 1".into()));
        }
        Ok(())
    }

    /// (train range, val range, predict range) for refit number `k`.
    fn refit_windows(&self, k: usize, total: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>, std::ops::Range<usize>) {
        let shift = k * self.refit_every;
        let tstart = if self.expanding {
            self.train_start
        } else {
            self.train_start + shift
        };
        let train = tstart..self.train_end + shift;
        let val = self.train_end + shift..self.val_end + shift;
        let pred_start = self.val_end + shift;
        let pred_end = (pred_start + self.refit_every).min(total);
        (train, val, pred_start..pred_end)
    }
}

/// One refit's outcome inside an expanding-window run.
#[derive(Debug, Clone)]
pub struct RefitRecord {
    pub refit_index: usize,
    pub train_range: (usize, usize),
    pub val_range: (usize, usize),
    pub tau_best: usize,
    pub val_loss: f64,
}

/// Expanding-window run output for one ensemble member.
pub struct ExpandingRun {
    pub predictions: Vec<(usize, Array1<f64>)>,
    pub refits: Vec<RefitRecord>,
}

/// Pooled walk-forward training: at each refit point the training intervals
/// are pooled into one data set, early-stopped against the pooled validation
/// set, and the resulting weights are frozen until the next refit.
pub fn expanding_window_chain(
    topo: &Topology,
    panels: &[PanelSlice],
    schedule: &WindowSchedule,
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<ExpandingRun> {
    schedule.validate(panels.len())?;
    let total = panels.len();
    let mut predictions = Vec::new();
    let mut refits = Vec::new();
    let mut k = 0usize;
    loop {
        let (train, val, pred) = schedule.refit_windows(k, total);
        if pred.is_empty() {
            break;
        }
        let (xt, rt) = pool(&panels[train.clone()])?;
        let (xv, rv) = pool(&panels[val.clone()])?;
        let mut stream = SeedStream::new(derive_seed(seed, k as u64));
        let theta0 = WeightSet::init(topo, &mut stream);
        let es = early_stopping(
            topo,
            &theta0,
            xt.view(),
            rt.view(),
            xv.view(),
            rv.view(),
            stop,
            loss_cfg,
            &mut stream,
            None,
        )?;
        if es.diverged {
            return Err(Error::Diverged(format!(
                "pooled fit diverged at refit {k}"
            )));
        }
        let weights = es.weights_best;
        for p in pred.clone() {
            let pr = forward_eval(topo, &weights, panels[p].x.view())?;
            predictions.push((panels[p].t, pr));
        }
        refits.push(RefitRecord {
            refit_index: k,
            train_range: (train.start, train.end),
            val_range: (val.start, val.end),
            tau_best: es.tau_best,
            val_loss: es.val_trace[es.tau_best],
        });
        if pred.end >= total {
            break;
        }
        k += 1;
    }
    Ok(ExpandingRun {
        predictions,
        refits,
    })
}

/// Ensemble wrapper: averages member predictions per interval.
pub fn expanding_window_ensemble(
    topo: &Topology,
    panels: &[PanelSlice],
    schedule: &WindowSchedule,
    stop: &StopConfig,
    loss_cfg: &LossConfig,
    seeds: &[u64],
) -> Result<(Vec<(usize, Array1<f64>)>, Vec<ExpandingRun>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("ensemble needs at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &s in seeds {
        runs.push(expanding_window_chain(topo, panels, schedule, stop, loss_cfg, s)?);
    }
    let steps = runs[0].predictions.len();
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = runs[0].predictions[i].0;
        let mut acc = runs[0].predictions[i].1.clone();
        for r in &runs[1..] {
            acc += &r.predictions[i].1;
        }
        acc /= runs.len() as f64;
        out.push((t, acc));
    }
    Ok((out, runs))
}

/// Time-smoothed SGD configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DtsConfig {
    /// Number of past gradients kept.
    pub window: usize,
    /// Forget factor in (0, 1]; weight of the i-th most recent gradient is
    /// `forget^i`.
    pub forget: f64,
    /// Step size for the single update per interval.
    pub step_size: f64,
}

impl DtsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        if !(self.forget > 0.0 && self.forget <= 1.0) {
            return Err(Error::InvalidConfig("forget factor must be in (0, 1]".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig("step size must be positive".into()));
        }
        Ok(())
    }
}

/// Forget-factor-weighted buffer of the last `window` gradients, each
/// recorded at the weights in force when its interval was revealed.
pub(crate) struct GradientBuffer {
    buf: VecDeque<Gradients>,
    window: usize,
    forget: f64,
}

impl GradientBuffer {
    pub(crate) fn new(window: usize, forget: f64) -> Self {
        Self {
            buf: VecDeque::with_capacity(window),
            window,
            forget,
        }
    }

    pub(crate) fn push(&mut self, g: Gradients) {
        if self.buf.len() == self.window {
            self.buf.pop_back();
        }
        self.buf.push_front(g);
    }

    /// `sum_i forget^i g_{t-i} / sum_i forget^i` over the buffer, newest
    /// first.
    pub(crate) fn combined(&self) -> Option<Gradients> {
        let mut acc = self.buf.front()?.clone();
        let mut coeff = 1.0;
        let mut norm = 1.0;
        for g in self.buf.iter().skip(1) {
            coeff *= self.forget;
            norm += coeff;
            acc.accumulate_scaled(g, coeff);
        }
        acc.scale(1.0 / norm);
        Some(acc)
    }
}

/// DTS run result; `diverged_at` holds the interval id where a non-finite
/// gradient halted the chain, if any.
pub struct DtsRun {
    pub predictions: Vec<(usize, Array1<f64>)>,
    pub update_count: usize,
    pub diverged_at: Option<usize>,
}

/// One DTS-SGD chain: after observing each interval the full-batch gradient
/// at the current weights joins the buffer and a single normalized update is
/// applied; the next interval is predicted with the updated weights.
pub fn dts_sgd_run(
    topo: &Topology,
    panels: &[PanelSlice],
    cfg: &DtsConfig,
    loss_cfg: &LossConfig,
    seed: u64,
) -> Result<DtsRun> {
    cfg.validate()?;
    if panels.len() < 2 {
        return Err(Error::InvalidConfig("DTS needs at least 2 intervals".into()));
    }
    let mut stream = SeedStream::new(seed);
    let mut weights = WeightSet::init(topo, &mut stream);
    let mut buffer = GradientBuffer::new(cfg.window, cfg.forget);
    let mut predictions = Vec::with_capacity(panels.len() - 1);
    let mut update_count = 0usize;

    for p in 0..panels.len() - 1 {
        let slice = &panels[p];
        let grad = match loss_and_gradient(
            topo,
            &mut weights,
            slice.x.view(),
            slice.r.view(),
            loss_cfg,
        ) {
            Ok((_, g)) => g,
            Err(Error::Diverged(_)) => {
                return Ok(DtsRun {
                    predictions,
                    update_count,
                    diverged_at: Some(slice.t),
                })
            }
            Err(e) => return Err(e),
        };
        buffer.push(grad);
        let combined = buffer.combined().expect("buffer non-empty");
        weights.apply_delta(&combined, -cfg.step_size);
        update_count += 1;
        if !weights.all_finite() {
            return Ok(DtsRun {
                predictions,
                update_count,
                diverged_at: Some(slice.t),
            });
        }
        let next = &panels[p + 1];
        let pr = forward_eval(topo, &weights, next.x.view())?;
        predictions.push((next.t, pr));
    }
    Ok(DtsRun {
        predictions,
        update_count,
        diverged_at: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn one_param_grad(v: f64) -> Gradients {
        let topo = Topology::new(1, vec![1], false).unwrap();
        let mut g = Gradients::zeros(&topo);
        g.dense[0].w[(0, 0)] = v;
        g
    }

    #[test]
    fn buffer_hand_arithmetic() {
        // w=2, forget 0.5, gradients g1=1 then g2=-1:
        // combined = (1*(-1) + 0.5*(1)) / 1.5 = -1/3.
        let mut buf = GradientBuffer::new(2, 0.5);
        buf.push(one_param_grad(1.0));
        buf.push(one_param_grad(-1.0));
        let c = buf.combined().unwrap();
        assert_abs_diff_eq!(c.dense[0].w[(0, 0)], -1.0 / 3.0, epsilon = 1e-15);
        // With step 0.1 the weight moves by -0.1 * (-1/3) = +0.0333...
        let topo = Topology::new(1, vec![1], false).unwrap();
        let mut w = WeightSet::zeros(&topo);
        w.apply_delta(&c, -0.1);
        assert_abs_diff_eq!(w.dense[0].w[(0, 0)], 0.1 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn window_one_is_plain_sgd() {
        let mut buf = GradientBuffer::new(1, 0.7);
        buf.push(one_param_grad(2.0));
        buf.push(one_param_grad(-3.0));
        let c = buf.combined().unwrap();
        assert_eq!(c.dense[0].w[(0, 0)], -3.0);
    }

    #[test]
    fn zero_gradients_do_not_move_weights() {
        let mut buf = GradientBuffer::new(3, 0.9);
        buf.push(one_param_grad(0.0));
        buf.push(one_param_grad(0.0));
        let c = buf.combined().unwrap();
        let topo = Topology::new(1, vec![1], false).unwrap();
        let mut w = WeightSet::zeros(&topo);
        w.dense[0].w[(0, 0)] = 0.5;
        w.apply_delta(&c, -0.1);
        assert_eq!(w.dense[0].w[(0, 0)], 0.5);
    }

    #[test]
    fn unit_forget_full_window_is_unweighted_mean() {
        let values = [0.3, -1.2, 0.75, 2.0, -0.4];
        let mut buf = GradientBuffer::new(values.len(), 1.0);
        for &v in &values {
            buf.push(one_param_grad(v));
        }
        let c = buf.combined().unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert_abs_diff_eq!(c.dense[0].w[(0, 0)], mean, epsilon = 1e-12);
    }

    fn linear_panel(count: usize, n: usize, seed: u64) -> Vec<PanelSlice> {
        let mut stream = SeedStream::new(seed);
        (0..count)
            .map(|t| {
                let mut x = Array2::zeros((n, 2));
                for v in x.iter_mut() {
                    *v = stream.normal();
                }
                let r = Array1::from_shape_fn(n, |i| 0.4 * x[(i, 0)] + 0.2 * x[(i, 1)]);
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
    fn dts_one_update_per_interval() {
        let panels = linear_panel(7, 12, 5);
        let topo = Topology::new(2, vec![3], false).unwrap();
        let cfg = DtsConfig {
            window: 3,
            forget: 0.8,
            step_size: 0.01,
        };
        let run = dts_sgd_run(&topo, &panels, &cfg, &LossConfig::mse_only(), 2).unwrap();
        assert_eq!(run.update_count, 6);
        assert_eq!(run.predictions.len(), 6);
        assert!(run.diverged_at.is_none());
    }

    fn tiny_stop() -> StopConfig {
        StopConfig {
            max_iterations: 40,
            tolerance: 1e-5,
            patience: 4,
            step_size: 0.03,
            batch_size: 8,
        }
    }

    #[test]
    fn expanding_window_freezes_weights_between_refits() {
        let panels = linear_panel(12, 10, 9);
        let topo = Topology::new(2, vec![3], false).unwrap();
        let schedule = WindowSchedule {
            train_start: 0,
            train_end: 4,
            val_end: 6,
            refit_every: 3,
            expanding: true,
        };
        let run = expanding_window_chain(
            &topo,
            &panels,
            &schedule,
            &tiny_stop(),
            &LossConfig::mse_only(),
            17,
        )
        .unwrap();
        // 6 OOS intervals, refit every 3: exactly 2 refits.
        assert_eq!(run.refits.len(), 2);
        assert_eq!(run.predictions.len(), 6);
        // Second refit trains on an expanded window.
        assert_eq!(run.refits[0].train_range, (0, 4));
        assert_eq!(run.refits[1].train_range, (0, 7));
        assert_eq!(run.refits[1].val_range, (7, 9));
    }

    #[test]
    fn rolling_schedule_moves_train_start() {
        let schedule = WindowSchedule {
            train_start: 0,
            train_end: 4,
            val_end: 6,
            refit_every: 3,
            expanding: false,
        };
        let (train, val, pred) = schedule.refit_windows(2, 20);
        assert_eq!(train, 6..10);
        assert_eq!(val, 10..12);
        assert_eq!(pred, 12..15);
    }

    #[test]
    fn degenerate_schedule_single_fit_spans_oos() {
        let panels = linear_panel(10, 10, 30);
        let topo = Topology::new(2, vec![3], false).unwrap();
        let schedule = WindowSchedule {
            train_start: 0,
            train_end: 4,
            val_end: 6,
            refit_every: 100,
            expanding: true,
        };
        let run = expanding_window_chain(
            &topo,
            &panels,
            &schedule,
            &tiny_stop(),
            &LossConfig::mse_only(),
            3,
        )
        .unwrap();
        assert_eq!(run.refits.len(), 1);
        assert_eq!(run.predictions.len(), 4);
        // All four predictions come from the same frozen weights: a repeat
        // evaluation must reproduce them bit-for-bit.
        let again = expanding_window_chain(
            &topo,
            &panels,
            &schedule,
            &tiny_stop(),
            &LossConfig::mse_only(),
            3,
        )
        .unwrap();
        for ((t1, p1), (t2, p2)) in run.predictions.iter().zip(&again.predictions) {
            assert_eq!(t1, t2);
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn schedule_validation_rejects_overlap() {
        let bad = WindowSchedule {
            train_start: 0,
            train_end: 6,
            val_end: 6,
            refit_every: 1,
            expanding: true,
        };
        assert!(bad.validate(10).is_err());
    }
}
