//! Cross-model comparison: per-interval Pearson correlation between two
//! models' prediction vectors, with a rolling 12-interval mean.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::PredictionSet;

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub per_interval: Vec<(usize, f64)>,
    pub rolling_12: Vec<(usize, f64)>,
    pub mean: f64,
}

/// Both sets must cover the same (t, entity) keys.
pub fn compare_models(a: &PredictionSet, b: &PredictionSet) -> Result<CompareReport> {
    if a.len() != b.len() {
        return Err(Error::Panel(format!(
            "misaligned ranges: {} vs {} records",
            a.len(),
            b.len()
        )));
    }
    let mut per_interval = Vec::new();
    let mut groups_b = b.by_interval();
    for (t, ra) in a.by_interval() {
        let (tb, rb) = groups_b
            .next()
            .ok_or_else(|| Error::Panel("misaligned ranges".into()))?;
        if t != tb || ra.len() != rb.len() {
            return Err(Error::Panel(format!(
                "misaligned ranges at interval {t} vs {tb}"
            )));
        }
        for (x, y) in ra.iter().zip(rb) {
            if x.entity_id != y.entity_id {
                return Err(Error::Panel(format!(
                    "misaligned entities at interval {t}: {} vs {}",
                    x.entity_id, y.entity_id
                )));
            }
        }
        let n = ra.len() as f64;
        let ma = ra.iter().map(|r| r.predicted).sum::<f64>() / n;
        let mb = rb.iter().map(|r| r.predicted).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            cov += (x.predicted - ma) * (y.predicted - mb);
            va += (x.predicted - ma) * (x.predicted - ma);
            vb += (y.predicted - mb) * (y.predicted - mb);
        }
        if va > 0.0 && vb > 0.0 {
            per_interval.push((t, cov / (va * vb).sqrt()));
        }
    }
    if per_interval.is_empty() {
        return Err(Error::Degenerate(
            "no intervals with non-constant predictions to correlate".into(),
        ));
    }
    let mean = per_interval.iter().map(|(_, v)| v).sum::<f64>() / per_interval.len() as f64;
    let rolling_12 = per_interval
        .iter()
        .enumerate()
        .map(|(i, &(t, _))| {
            let start = i.saturating_sub(11);
            let sum: f64 = per_interval[start..=i].iter().map(|(_, v)| v).sum();
            (t, sum / (i - start + 1) as f64)
        })
        .collect();
    Ok(CompareReport {
        per_interval,
        rolling_12,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::PredRecord;
    use approx::assert_abs_diff_eq;

    fn set(scale: f64, shift: f64) -> PredictionSet {
        let mut recs = Vec::new();
        let mut stream = crate::rng::SeedStream::new(12);
        for t in 0..5usize {
            for i in 0..8usize {
                let base = stream.normal();
                recs.push(PredRecord {
                    t,
                    entity_id: format!("e{i}"),
                    predicted: scale * base + shift,
                    realized: 0.0,
                });
            }
        }
        PredictionSet::from_records(recs).unwrap()
    }

    #[test]
    fn identical_sets_correlate_at_one() {
        let a = set(1.0, 0.0);
        let cmp = compare_models(&a, &a).unwrap();
        assert_abs_diff_eq!(cmp.mean, 1.0, epsilon = 1e-12);
        for (_, v) in &cmp.per_interval {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn negated_predictions_correlate_at_minus_one() {
        // Same underlying draws: rebuild with the same stream, negated.
        let a = set(1.0, 0.0);
        let b = PredictionSet::from_records(
            a.records()
                .iter()
                .map(|r| PredRecord {
                    t: r.t,
                    entity_id: r.entity_id.clone(),
                    predicted: -r.predicted,
                    realized: r.realized,
                })
                .collect(),
        )
        .unwrap();
        let cmp = compare_models(&a, &b).unwrap();
        assert_abs_diff_eq!(cmp.mean, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn seeded_fixture_matches_direct_recomputation() {
        let a = set(1.0, 0.0);
        let b = {
            let mut stream = crate::rng::SeedStream::new(77);
            PredictionSet::from_records(
                a.records()
                    .iter()
                    .map(|r| PredRecord {
                        t: r.t,
                        entity_id: r.entity_id.clone(),
                        predicted: r.predicted + stream.normal(),
                        realized: r.realized,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let cmp = compare_models(&a, &b).unwrap();
        for (t, got) in &cmp.per_interval {
            let ra: Vec<f64> = a
                .records()
                .iter()
                .filter(|r| r.t == *t)
                .map(|r| r.predicted)
                .collect();
            let rb: Vec<f64> = b
                .records()
                .iter()
                .filter(|r| r.t == *t)
                .map(|r| r.predicted)
                .collect();
            let n = ra.len() as f64;
            let (ma, mb) = (
                ra.iter().sum::<f64>() / n,
                rb.iter().sum::<f64>() / n,
            );
            let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
            let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
            assert_abs_diff_eq!(*got, cov / (va * vb).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn misaligned_ranges_rejected() {
        let a = set(1.0, 0.0);
        let mut recs: Vec<PredRecord> = a.records().to_vec();
        recs.pop();
        let b = PredictionSet::from_records(recs).unwrap();
        assert!(compare_models(&a, &b).is_err());
    }
}
