use super::PredictionSet;
use crate::error::{Error, Result};

/// Decile portfolio summary: per-decile mean predicted and realized returns
/// (P1 lowest prediction, P10 highest), the top-minus-bottom spread series,
/// its annualized Sharpe ratio, and the quintile analogue of the spread.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecileReport {
    pub mean_predicted: Vec<f64>,
    pub mean_realized: Vec<f64>,
    /// Per-interval P10 - P1 realized spread.
    pub spread_series: Vec<(usize, f64)>,
    pub mean_spread: f64,
    /// Annualized Sharpe of the spread; NaN when its variance is zero.
    pub sharpe: f64,
    /// Mean top-20% minus bottom-20% realized spread.
    pub quintile_spread: f64,
    /// Intervals skipped for having fewer than 10 entities.
    pub skipped_intervals: usize,
}

/// Contiguous bucket sizes over `n` sorted entities: as equal as possible,
/// remainder handed out from the first bucket upward.
pub fn bucket_sizes(n: usize, buckets: usize) -> Vec<usize> {
    let base = n / buckets;
    let rem = n % buckets;
    (0..buckets)
        .map(|k| base + usize::from(k < rem))
        .collect()
}

/// Mean realized/predicted return per bucket after sorting by prediction
/// (ties broken by entity id for determinism).
fn bucket_means(
    recs: &[super::PredRecord],
    buckets: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&a, &b| {
        recs[a]
            .predicted
            .partial_cmp(&recs[b].predicted)
            .expect("finite predictions")
            .then_with(|| recs[a].entity_id.cmp(&recs[b].entity_id))
    });
    let sizes = bucket_sizes(recs.len(), buckets);
    let mut mean_pred = Vec::with_capacity(buckets);
    let mut mean_real = Vec::with_capacity(buckets);
    let mut start = 0;
    for sz in sizes {
        let members = &order[start..start + sz];
        let n = sz as f64;
        mean_pred.push(members.iter().map(|&i| recs[i].predicted).sum::<f64>() / n);
        mean_real.push(members.iter().map(|&i| recs[i].realized).sum::<f64>() / n);
        start += sz;
    }
    (mean_pred, mean_real)
}

/// Annualized Sharpe ratio of a monthly series:
/// `12 * mean / sqrt(12 * var)` with sample (n-1) variance. NaN when the
/// variance is zero or fewer than two observations exist.
pub fn sharpe_ratio(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return f64::NAN;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return f64::NAN;
    }
    12.0 * mean / (12.0 * var).sqrt()
}

/// Per-interval decile realized means (P1..P10), for cumulative-curve plots.
/// Intervals with fewer than 10 entities are skipped.
pub fn decile_realized_by_interval(preds: &PredictionSet) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::new();
    for (t, recs) in preds.by_interval() {
        if recs.len() < 10 {
            continue;
        }
        let (_, dr) = bucket_means(recs, 10);
        out.push((t, dr));
    }
    if out.is_empty() {
        return Err(Error::Degenerate(
            "no interval with at least 10 entities".into(),
        ));
    }
    Ok(out)
}

pub fn decile_table(preds: &PredictionSet) -> Result<DecileReport> {
    let mut sum_pred = vec![0.0; 10];
    let mut sum_real = vec![0.0; 10];
    let mut spread_series = Vec::new();
    let mut quintile_spreads = Vec::new();
    let mut used = 0usize;
    let mut skipped = 0usize;

    for (t, recs) in preds.by_interval() {
        if recs.len() < 10 {
            skipped += 1;
            continue;
        }
        let (dp, dr) = bucket_means(recs, 10);
        for k in 0..10 {
            sum_pred[k] += dp[k];
            sum_real[k] += dr[k];
        }
        spread_series.push((t, dr[9] - dr[0]));
        let (_, qr) = bucket_means(recs, 5);
        quintile_spreads.push(qr[4] - qr[0]);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Degenerate(
            "decile table: no interval with at least 10 entities".into(),
        ));
    }
    let n = used as f64;
    let spreads: Vec<f64> = spread_series.iter().map(|(_, v)| *v).collect();
    Ok(DecileReport {
        mean_predicted: sum_pred.into_iter().map(|v| v / n).collect(),
        mean_realized: sum_real.into_iter().map(|v| v / n).collect(),
        mean_spread: spreads.iter().sum::<f64>() / n,
        sharpe: sharpe_ratio(&spreads),
        spread_series,
        quintile_spread: quintile_spreads.iter().sum::<f64>() / n,
        skipped_intervals: skipped,
    })
}
