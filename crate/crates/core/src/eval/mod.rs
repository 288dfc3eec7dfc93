//! Out-of-sample evaluation: pooled and per-interval R-squared variants,
//! information coefficients, decile portfolios with the annualized Sharpe
//! ratio of the top-minus-bottom spread, per-feature importance via
//! zero-out counterfactuals, and cross-model prediction combination.

mod combine;
mod deciles;
mod importance;
mod metrics;

pub use combine::{ensemble_combine, CombineMode};
pub use deciles::{
    bucket_sizes, decile_realized_by_interval, decile_table, sharpe_ratio, DecileReport,
};
pub use importance::{feature_importance, feature_importance_matrix, FiSeries};
pub use metrics::{
    information_coefficient, mean_monthly_r2, pooled_r2_oos, IcSeries, MeanMonthlyR2,
};

use crate::error::{Error, Result};
use crate::panel::PanelSlice;

/// One aligned out-of-sample observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRecord {
    pub t: usize,
    pub entity_id: String,
    pub predicted: f64,
    pub realized: f64,
}

/// Aligned (t, entity) predictions with realized outcomes, sorted by key.
#[derive(Debug, Clone, Default)]
pub struct PredictionSet {
    records: Vec<PredRecord>,
}

impl PredictionSet {
    pub fn from_records(mut records: Vec<PredRecord>) -> Result<Self> {
        records.sort_by(|a, b| (a.t, &a.entity_id).cmp(&(b.t, &b.entity_id)));
        for w in records.windows(2) {
            if w[0].t == w[1].t && w[0].entity_id == w[1].entity_id {
                return Err(Error::Panel(format!(
                    "duplicate prediction key ({}, {})",
                    w[0].t, w[0].entity_id
                )));
            }
        }
        Ok(Self { records })
    }

    /// Builds records by aligning per-interval prediction vectors with the
    /// corresponding panel slices (realized returns come from the slice).
    pub fn from_interval_predictions(
        panels: &[PanelSlice],
        preds: &[(usize, ndarray::Array1<f64>)],
    ) -> Result<Self> {
        let mut records = Vec::new();
        for (t, p) in preds {
            let slice = panels
                .iter()
                .find(|s| s.t == *t)
                .ok_or_else(|| Error::Panel(format!("no panel slice for interval {t}")))?;
            if p.len() != slice.len() {
                return Err(Error::DimensionMismatch(format!(
                    "interval {t}: {} predictions vs {} entities",
                    p.len(),
                    slice.len()
                )));
            }
            for i in 0..slice.len() {
                records.push(PredRecord {
                    t: *t,
                    entity_id: slice.entity_ids[i].clone(),
                    predicted: p[i],
                    realized: slice.r[i],
                });
            }
        }
        Self::from_records(records)
    }

    pub fn records(&self) -> &[PredRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Iterates intervals in order as (t, contiguous records).
    pub fn by_interval(&self) -> impl Iterator<Item = (usize, &[PredRecord])> {
        ByInterval {
            records: &self.records,
            pos: 0,
        }
    }
}

struct ByInterval<'a> {
    records: &'a [PredRecord],
    pos: usize,
}

impl<'a> Iterator for ByInterval<'a> {
    type Item = (usize, &'a [PredRecord]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.records.len() {
            return None;
        }
        let t = self.records[self.pos].t;
        let start = self.pos;
        while self.pos < self.records.len() && self.records[self.pos].t == t {
            self.pos += 1;
        }
        Some((t, &self.records[start..self.pos]))
    }
}

/// Everything the reporting layer wants in one place.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricsReport {
    pub pooled_r2_oos: f64,
    pub mean_monthly_r2: f64,
    pub mean_monthly_r2_skipped: usize,
    pub ic_mean: f64,
    pub rank_ic_mean: f64,
    pub ic_series: Vec<(usize, f64)>,
    pub decile: DecileReport,
}

/// Computes the full metric suite over one prediction set.
pub fn compute_metrics(preds: &PredictionSet) -> Result<MetricsReport> {
    let pooled = pooled_r2_oos(preds)?;
    let monthly = mean_monthly_r2(preds)?;
    let ic = information_coefficient(preds, false)?;
    let rank_ic = information_coefficient(preds, true)?;
    let decile = decile_table(preds)?;
    Ok(MetricsReport {
        pooled_r2_oos: pooled,
        mean_monthly_r2: monthly.value,
        mean_monthly_r2_skipped: monthly.skipped_intervals,
        ic_mean: ic.mean,
        rank_ic_mean: rank_ic.mean,
        ic_series: ic.per_interval,
        decile,
    })
}
