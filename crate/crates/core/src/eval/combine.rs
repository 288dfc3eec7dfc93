use super::{PredRecord, PredictionSet};
use crate::error::{Error, Result};

/// How two models' predictions are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// Plain average of raw predictions.
    RawMean,
    /// Standardize each model's predictions cross-sectionally per interval
    /// (mean 0, sample std 1), then average.
    StandardizedMean,
}

impl std::str::FromStr for CombineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw_mean" => Ok(Self::RawMean),
            "standardized_mean" => Ok(Self::StandardizedMean),
            other => Err(Error::InvalidConfig(format!(
                "unknown combine mode {other:?} (expected raw_mean or standardized_mean)"
            ))),
        }
    }
}

fn standardize_per_interval(set: &PredictionSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len());
    for (t, recs) in set.by_interval() {
        let n = recs.len() as f64;
        if recs.len() < 2 {
            return Err(Error::Degenerate(format!(
                "cannot standardize a single-entity interval {t}"
            )));
        }
        let mean = recs.iter().map(|r| r.predicted).sum::<f64>() / n;
        let var = recs
            .iter()
            .map(|r| (r.predicted - mean) * (r.predicted - mean))
            .sum::<f64>()
            / (n - 1.0);
        if var <= 0.0 {
            return Err(Error::Degenerate(format!(
                "constant predictions in interval {t} cannot be standardized"
            )));
        }
        let std = var.sqrt();
        out.extend(recs.iter().map(|r| (r.predicted - mean) / std));
    }
    Ok(out)
}

/// Combines two aligned prediction sets. Keys (t, entity) and realized
/// returns must match exactly.
pub fn ensemble_combine(
    a: &PredictionSet,
    b: &PredictionSet,
    mode: CombineMode,
) -> Result<PredictionSet> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction sets have {} vs {} records",
            a.len(),
            b.len()
        )));
    }
    for (ra, rb) in a.records().iter().zip(b.records()) {
        if ra.t != rb.t || ra.entity_id != rb.entity_id {
            return Err(Error::Panel(format!(
                "misaligned keys: ({}, {}) vs ({}, {})",
                ra.t, ra.entity_id, rb.t, rb.entity_id
            )));
        }
        if ra.realized != rb.realized {
            return Err(Error::Panel(format!(
                "realized returns disagree at ({}, {})",
                ra.t, ra.entity_id
            )));
        }
    }
    let (pa, pb) = match mode {
        CombineMode::RawMean => (
            a.records().iter().map(|r| r.predicted).collect::<Vec<_>>(),
            b.records().iter().map(|r| r.predicted).collect::<Vec<_>>(),
        ),
        CombineMode::StandardizedMean => {
            (standardize_per_interval(a)?, standardize_per_interval(b)?)
        }
    };
    let records = a
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| PredRecord {
            t: r.t,
            entity_id: r.entity_id.clone(),
            predicted: 0.5 * (pa[i] + pb[i]),
            realized: r.realized,
        })
        .collect();
    PredictionSet::from_records(records)
}
