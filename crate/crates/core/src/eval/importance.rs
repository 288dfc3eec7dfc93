use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{forward_eval, Topology, WeightSet};
use crate::panel::PanelSlice;

/// Feature-importance series for one feature: per interval, the rolling
/// 12-interval average (over the available prefix at the start) and yearly
/// (t/12 bucket) averages.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FiSeries {
    pub feature: usize,
    pub per_interval: Vec<(usize, f64)>,
    pub rolling_12: Vec<(usize, f64)>,
    pub yearly: Vec<(usize, f64)>,
}

fn ensemble_prediction(
    topo: &Topology,
    members: &[WeightSet],
    x: &Array2<f64>,
) -> Result<Array1<f64>> {
    let mut sum: Option<Array1<f64>> = None;
    for w in members {
        let p = forward_eval(topo, w, x.view())?;
        sum = Some(match sum {
            Some(acc) => acc + &p,
            None => p,
        });
    }
    let mut p = sum.ok_or_else(|| Error::EmptyBatch("no ensemble members".into()))?;
    p /= members.len() as f64;
    Ok(p)
}

/// `1 - R^2` between the prediction with `feature` zeroed and the baseline
/// prediction, per interval. The R-squared uses the baseline prediction's
/// cross-sectional mean in the denominator, so an unchanged prediction gives
/// importance exactly zero.
fn fi_one_interval(
    topo: &Topology,
    members: &[WeightSet],
    x: &Array2<f64>,
    baseline: &Array1<f64>,
    denom: f64,
    feature: usize,
) -> Result<f64> {
    let mut x_cf = x.clone();
    x_cf.column_mut(feature).fill(0.0);
    let counterfactual = ensemble_prediction(topo, members, &x_cf)?;
    let sse = baseline
        .iter()
        .zip(counterfactual.iter())
        .map(|(b, c)| (b - c) * (b - c))
        .sum::<f64>();
    Ok(sse / denom)
}

fn baseline_denominator(baseline: &Array1<f64>, t: usize) -> Result<f64> {
    let n = baseline.len() as f64;
    let mean = baseline.sum() / n;
    let denom = baseline.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "constant baseline prediction in interval {t}"
        )));
    }
    Ok(denom)
}

fn rolling_mean(series: &[(usize, f64)], window: usize) -> Vec<(usize, f64)> {
    series
        .iter()
        .enumerate()
        .map(|(i, &(t, _))| {
            let start = i.saturating_sub(window - 1);
            let sum: f64 = series[start..=i].iter().map(|(_, v)| v).sum();
            (t, sum / (i - start + 1) as f64)
        })
        .collect()
}

fn yearly_mean(series: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for &(t, v) in series {
        let year = t / 12;
        match out.last_mut() {
            Some(last) if last.0 == year => {
                last.1 += v;
                last.2 += 1;
            }
            _ => out.push((year, v, 1)),
        }
    }
    out.into_iter().map(|(y, s, c)| (y, s / c as f64)).collect()
}

fn slice_for<'a>(panels: &'a [PanelSlice], t: usize) -> Result<&'a PanelSlice> {
    panels
        .iter()
        .find(|s| s.t == t)
        .ok_or_else(|| Error::Panel(format!("no panel slice for interval {t}")))
}

/// Importance of one feature over a replayed model chain. `snapshots` holds,
/// per interval, the ensemble member weights in force when that interval was
/// predicted.
pub fn feature_importance(
    topo: &Topology,
    snapshots: &[(usize, Vec<WeightSet>)],
    panels: &[PanelSlice],
    feature: usize,
) -> Result<FiSeries> {
    if feature >= topo.input_dim {
        return Err(Error::InvalidConfig(format!(
            "feature index {feature} out of range for input_dim {}",
            topo.input_dim
        )));
    }
    let mut per_interval = Vec::with_capacity(snapshots.len());
    for (t, members) in snapshots {
        let slice = slice_for(panels, *t)?;
        let baseline = ensemble_prediction(topo, members, &slice.x)?;
        let denom = baseline_denominator(&baseline, *t)?;
        let fi = fi_one_interval(topo, members, &slice.x, &baseline, denom, feature)?;
        per_interval.push((*t, fi));
    }
    Ok(FiSeries {
        feature,
        rolling_12: rolling_mean(&per_interval, 12),
        yearly: yearly_mean(&per_interval),
        per_interval,
    })
}

/// Importance of every feature: rows are intervals (in snapshot order),
/// columns are features. The baseline is computed once per interval.
pub fn feature_importance_matrix(
    topo: &Topology,
    snapshots: &[(usize, Vec<WeightSet>)],
    panels: &[PanelSlice],
) -> Result<(Vec<usize>, Array2<f64>)> {
    let m = topo.input_dim;
    let mut out = Array2::zeros((snapshots.len(), m));
    let mut intervals = Vec::with_capacity(snapshots.len());
    for (row, (t, members)) in snapshots.iter().enumerate() {
        let slice = slice_for(panels, *t)?;
        let baseline = ensemble_prediction(topo, members, &slice.x)?;
        let denom = baseline_denominator(&baseline, *t)?;
        for j in 0..m {
            out[(row, j)] = fi_one_interval(topo, members, &slice.x, &baseline, denom, j)?;
        }
        intervals.push(*t);
    }
    Ok((intervals, out))
}
