use super::{PredRecord, PredictionSet};
use crate::error::{Error, Result};

/// Pooled out-of-sample R-squared without mean adjustment:
/// `1 - sum((r - r_hat)^2) / sum(r^2)` over the whole set.
pub fn pooled_r2_oos(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyBatch("pooled R2 over empty set".into()));
    }
    let mut sse = 0.0;
    let mut ss = 0.0;
    for rec in preds.records() {
        sse += (rec.realized - rec.predicted) * (rec.realized - rec.predicted);
        ss += rec.realized * rec.realized;
    }
    if ss <= 0.0 {
        return Err(Error::Degenerate(
            "pooled R2 undefined: all realized returns are zero".into(),
        ));
    }
    Ok(1.0 - sse / ss)
}

/// Mean monthly R-squared with its exclusion count.
#[derive(Debug, Clone, Copy)]
pub struct MeanMonthlyR2 {
    pub value: f64,
    /// Intervals excluded for a constant cross-section or n < 2.
    pub skipped_intervals: usize,
}

/// Per-interval `1 - sum((r - r_hat)^2)/sum((r - mean(r))^2)`, averaged over
/// intervals. Intervals with a constant realized cross-section are excluded
/// and counted.
pub fn mean_monthly_r2(preds: &PredictionSet) -> Result<MeanMonthlyR2> {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (_, recs) in preds.by_interval() {
        let n = recs.len() as f64;
        if recs.len() < 2 {
            skipped += 1;
            continue;
        }
        let mean = recs.iter().map(|r| r.realized).sum::<f64>() / n;
        let ss_tot: f64 = recs.iter().map(|r| (r.realized - mean).powi(2)).sum();
        if ss_tot <= 0.0 {
            skipped += 1;
            continue;
        }
        let sse: f64 = recs
            .iter()
            .map(|r| (r.realized - r.predicted).powi(2))
            .sum();
        sum += 1.0 - sse / ss_tot;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Degenerate(
            "mean monthly R2: no usable intervals".into(),
        ));
    }
    Ok(MeanMonthlyR2 {
        value: sum / used as f64,
        skipped_intervals: skipped,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Per-interval information coefficient and its time-series mean.
#[derive(Debug, Clone)]
pub struct IcSeries {
    pub per_interval: Vec<(usize, f64)>,
    pub mean: f64,
    /// Intervals excluded for n < 3 or a constant vector.
    pub skipped_intervals: usize,
}

/// Cross-sectional Pearson correlation between predictions and realized
/// returns per interval (Spearman rank correlation when `rank_based`),
/// averaged over time.
pub fn information_coefficient(preds: &PredictionSet, rank_based: bool) -> Result<IcSeries> {
    let mut per_interval = Vec::new();
    let mut skipped = 0usize;
    for (t, recs) in preds.by_interval() {
        if recs.len() < 3 {
            skipped += 1;
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = recs
            .iter()
            .map(|r: &PredRecord| (r.predicted, r.realized))
            .unzip();
        let corr = if rank_based {
            pearson(&average_ranks(&xs), &average_ranks(&ys))
        } else {
            pearson(&xs, &ys)
        };
        match corr {
            Some(ic) => per_interval.push((t, ic)),
            None => skipped += 1,
        }
    }
    if per_interval.is_empty() {
        return Err(Error::Degenerate(
            "information coefficient: no usable intervals".into(),
        ));
    }
    let mean = per_interval.iter().map(|(_, v)| v).sum::<f64>() / per_interval.len() as f64;
    Ok(IcSeries {
        per_interval,
        mean,
        skipped_intervals: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(records: Vec<(usize, &str, f64, f64)>) -> PredictionSet {
        PredictionSet::from_records(
            records
                .into_iter()
                .map(|(t, id, p, r)| PredRecord {
                    t,
                    entity_id: id.into(),
                    predicted: p,
                    realized: r,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_predictor_scores_exactly_zero() {
        let s = set(vec![
            (0, "a", 0.0, 1.0),
            (0, "b", 0.0, -2.0),
            (1, "a", 0.0, 0.5),
        ]);
        assert_eq!(pooled_r2_oos(&s).unwrap(), 0.0);
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let s = set(vec![(0, "a", 1.0, 1.0), (0, "b", -2.0, -2.0)]);
        assert_eq!(pooled_r2_oos(&s).unwrap(), 1.0);
    }

    #[test]
    fn pooled_r2_hand_fixture() {
        // r = [1, -1, 2], r_hat = [.5, -.5, 1]: 1 - 1.5/6 = 0.75.
        let s = set(vec![
            (0, "a", 0.5, 1.0),
            (0, "b", -0.5, -1.0),
            (0, "c", 1.0, 2.0),
        ]);
        assert_abs_diff_eq!(pooled_r2_oos(&s).unwrap(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn all_zero_realized_is_error() {
        let s = set(vec![(0, "a", 0.5, 0.0), (0, "b", -0.5, 0.0)]);
        assert!(pooled_r2_oos(&s).is_err());
    }

    #[test]
    fn monthly_r2_mean_predictor_is_zero() {
        // Predicting the cross-sectional mean every interval scores 0.
        let s = set(vec![
            (0, "a", 1.0, 0.0),
            (0, "b", 1.0, 2.0),
            (1, "a", -1.0, -3.0),
            (1, "b", -1.0, 1.0),
        ]);
        let got = mean_monthly_r2(&s).unwrap();
        assert_abs_diff_eq!(got.value, 0.0, epsilon = 1e-15);
        assert_eq!(got.skipped_intervals, 0);
    }

    #[test]
    fn monthly_r2_perfect_is_one() {
        let s = set(vec![
            (0, "a", 0.0, 0.0),
            (0, "b", 2.0, 2.0),
            (1, "a", -3.0, -3.0),
            (1, "b", 1.0, 1.0),
        ]);
        assert_abs_diff_eq!(mean_monthly_r2(&s).unwrap().value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn monthly_r2_two_interval_spreadsheet_fixture() {
        // Interval 0: r=[1,2,3], p=[1,1,1] -> 1 - 5/2 = -1.5.
        // Interval 1: r=[0,4], p=[1,3]     -> 1 - 2/8 = 0.75.
        // Mean = (-1.5 + 0.75)/2 = -0.375.
        let s = set(vec![
            (0, "a", 1.0, 1.0),
            (0, "b", 1.0, 2.0),
            (0, "c", 1.0, 3.0),
            (1, "a", 1.0, 0.0),
            (1, "b", 3.0, 4.0),
        ]);
        assert_abs_diff_eq!(mean_monthly_r2(&s).unwrap().value, -0.375, epsilon = 1e-12);
    }

    #[test]
    fn monthly_r2_constant_interval_excluded_with_count() {
        let s = set(vec![
            (0, "a", 1.0, 5.0),
            (0, "b", 2.0, 5.0),
            (1, "a", 0.0, 0.0),
            (1, "b", 2.0, 2.0),
        ]);
        let got = mean_monthly_r2(&s).unwrap();
        assert_eq!(got.skipped_intervals, 1);
        assert_abs_diff_eq!(got.value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ic_affine_invariance() {
        // r_hat = 2 r + 5 gives IC exactly 1 per interval.
        let s = set(vec![
            (0, "a", 2.0 * 0.3 + 5.0, 0.3),
            (0, "b", 2.0 * -0.1 + 5.0, -0.1),
            (0, "c", 2.0 * 0.8 + 5.0, 0.8),
            (1, "a", 2.0 * 1.0 + 5.0, 1.0),
            (1, "b", 2.0 * 0.0 + 5.0, 0.0),
            (1, "c", 2.0 * -1.0 + 5.0, -1.0),
        ]);
        let ic = information_coefficient(&s, false).unwrap();
        assert_abs_diff_eq!(ic.mean, 1.0, epsilon = 1e-12);
        for (_, v) in &ic.per_interval {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ic_negated_predictions() {
        let s = set(vec![
            (0, "a", -0.3, 0.3),
            (0, "b", 0.1, -0.1),
            (0, "c", -0.8, 0.8),
        ]);
        let ic = information_coefficient(&s, false).unwrap();
        assert_abs_diff_eq!(ic.mean, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn ic_matches_textbook_formula_on_noise() {
        let mut stream = crate::rng::SeedStream::new(41);
        let mut records = Vec::new();
        for t in 0..4usize {
            for i in 0..25usize {
                records.push(PredRecord {
                    t,
                    entity_id: format!("e{i:02}"),
                    predicted: stream.normal(),
                    realized: stream.normal(),
                });
            }
        }
        let s = PredictionSet::from_records(records.clone()).unwrap();
        let ic = information_coefficient(&s, false).unwrap();
        // Independent recomputation straight from the definition.
        for (t, want) in &ic.per_interval {
            let sub: Vec<&PredRecord> = records.iter().filter(|r| r.t == *t).collect();
            let n = sub.len() as f64;
            let mp = sub.iter().map(|r| r.predicted).sum::<f64>() / n;
            let mr = sub.iter().map(|r| r.realized).sum::<f64>() / n;
            let cov: f64 = sub
                .iter()
                .map(|r| (r.predicted - mp) * (r.realized - mr))
                .sum();
            let vp: f64 = sub.iter().map(|r| (r.predicted - mp).powi(2)).sum();
            let vr: f64 = sub.iter().map(|r| (r.realized - mr).powi(2)).sum();
            let direct = cov / (vp * vr).sqrt();
            assert_abs_diff_eq!(*want, direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn spearman_equals_pearson_on_ranks() {
        let s = set(vec![
            (0, "a", 10.0, 1.0),
            (0, "b", 20.0, 4.0),
            (0, "c", 15.0, 9.0),
            (0, "d", 40.0, 16.0),
        ]);
        let rank_ic = information_coefficient(&s, true).unwrap();
        // Monotone but nonlinear relationship: Spearman on this data is the
        // Pearson correlation of ranks [1,3,2,4] vs [1,2,3,4] = 0.8.
        assert_abs_diff_eq!(rank_ic.mean, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn constant_vector_interval_excluded() {
        let s = set(vec![
            (0, "a", 1.0, 0.3),
            (0, "b", 1.0, -0.1),
            (0, "c", 1.0, 0.8),
            (1, "a", 0.5, 0.3),
            (1, "b", 0.2, -0.1),
            (1, "c", -0.4, 0.8),
        ]);
        let ic = information_coefficient(&s, false).unwrap();
        assert_eq!(ic.skipped_intervals, 1);
        assert_eq!(ic.per_interval.len(), 1);
    }
}
