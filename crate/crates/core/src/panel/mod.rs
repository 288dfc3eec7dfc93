//! Panel data model: one [`PanelSlice`] per time interval holding the
//! cross-section of entities, plus CSV ingestion and the preprocessing
//! pipeline (rank scaling, winsorized target standardization, investable
//! market-cap filtering).

mod csvio;
mod preprocess;

pub use csvio::{load_panel, load_panel_csv, write_panel, write_panel_csv, CsvSchema};
pub use preprocess::{
    investable_filter, percentile_linear, preprocess_sequence, rank_scale,
    winsorize_standardize, BreakpointConfig, PreprocessConfig,
};

use std::collections::{BTreeMap, HashSet};

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// One time interval's cross-section. Missing feature cells are NaN.
#[derive(Debug, Clone)]
pub struct PanelSlice {
    /// Interval index, strictly increasing across a sequence.
    pub t: usize,
    /// Original date label (integer interval or ISO date).
    pub date: String,
    pub entity_ids: Vec<String>,
    /// Feature matrix, n x m.
    pub x: Array2<f64>,
    /// Target vector (returns), length n.
    pub r: Array1<f64>,
    /// Optional market capitalization per entity.
    pub mcap: Option<Array1<f64>>,
    /// Optional group label columns (industry codes, exchange flags, ...).
    pub groups: BTreeMap<String, Vec<String>>,
}

impl PanelSlice {
    pub fn new(
        t: usize,
        date: String,
        entity_ids: Vec<String>,
        x: Array2<f64>,
        r: Array1<f64>,
    ) -> Result<Self> {
        if entity_ids.len() != x.nrows() || r.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "slice {t}: {} ids, {} feature rows, {} targets",
                entity_ids.len(),
                x.nrows(),
                r.len()
            )));
        }
        Ok(Self {
            t,
            date,
            entity_ids,
            x,
            r,
            mcap: None,
            groups: BTreeMap::new(),
        })
    }

    pub fn with_mcap(mut self, mcap: Array1<f64>) -> Result<Self> {
        if mcap.len() != self.len() {
            return Err(Error::DimensionMismatch("mcap length".into()));
        }
        self.mcap = Some(mcap);
        Ok(self)
    }

    pub fn with_group(mut self, name: &str, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch(format!("group {name} length")));
        }
        self.groups.insert(name.to_string(), labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity_ids.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }

    /// New slice keeping only the entities in `keep`, preserving row order.
    pub fn filter_to_ids(&self, keep: &HashSet<String>) -> Self {
        let idx: Vec<usize> = self
            .entity_ids
            .iter()
            .enumerate()
            .filter(|(_, id)| keep.contains(*id))
            .map(|(i, _)| i)
            .collect();
        self.select_rows(&idx)
    }

    /// New slice with the given row subset.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            t: self.t,
            date: self.date.clone(),
            entity_ids: idx.iter().map(|&i| self.entity_ids[i].clone()).collect(),
            x: self.x.select(Axis(0), idx),
            r: self.r.select(Axis(0), idx),
            mcap: self.mcap.as_ref().map(|m| m.select(Axis(0), idx)),
            groups: self
                .groups
                .iter()
                .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
        }
    }
}

/// Checks a sequence is non-empty with strictly increasing interval indices
/// and a consistent feature count.
pub fn validate_sequence(slices: &[PanelSlice]) -> Result<()> {
    if slices.is_empty() {
        return Err(Error::Panel("empty panel sequence".into()));
    }
    let m = slices[0].num_features();
    for w in slices.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::Panel(format!(
                "interval indices not strictly increasing: {} then {}",
                w[0].t, w[1].t
            )));
        }
    }
    if let Some(s) = slices.iter().find(|s| s.num_features() != m) {
        return Err(Error::DimensionMismatch(format!(
            "slice {} has {} features, expected {m}",
            s.t,
            s.num_features()
        )));
    }
    Ok(())
}

/// Stacks several slices into one pooled (X, r) training set.
pub fn pool(slices: &[PanelSlice]) -> Result<(Array2<f64>, Array1<f64>)> {
    validate_sequence(slices)?;
    let m = slices[0].num_features();
    let n_total: usize = slices.iter().map(|s| s.len()).sum();
    if n_total == 0 {
        return Err(Error::EmptyBatch("pooled panel has no rows".into()));
    }
    let mut x = Array2::zeros((n_total, m));
    let mut r = Array1::zeros(n_total);
    let mut row = 0;
    for s in slices {
        for i in 0..s.len() {
            x.row_mut(row).assign(&s.x.row(i));
            r[row] = s.r[i];
            row += 1;
        }
    }
    Ok((x, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn slice(t: usize, ids: &[&str]) -> PanelSlice {
        let n = ids.len();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (t * 100 + i * 10 + j) as f64);
        let r = Array1::from_shape_fn(n, |i| i as f64);
        PanelSlice::new(
            t,
            format!("{t}"),
            ids.iter().map(|s| s.to_string()).collect(),
            x,
            r,
        )
        .unwrap()
    }

    #[test]
    fn filter_preserves_order_and_values() {
        let s = slice(0, &["a", "b", "c"]);
        let keep: HashSet<String> = ["c", "a"].iter().map(|s| s.to_string()).collect();
        let f = s.filter_to_ids(&keep);
        assert_eq!(f.entity_ids, vec!["a", "c"]);
        assert_eq!(f.x.row(1), s.x.row(2));
    }

    #[test]
    fn pool_stacks_rows() {
        let (x, r) = pool(&[slice(0, &["a", "b"]), slice(1, &["a", "b", "c"])]).unwrap();
        assert_eq!(x.nrows(), 5);
        assert_eq!(r, array![0.0, 1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn sequence_must_increase() {
        let err = validate_sequence(&[slice(3, &["a"]), slice(3, &["a"])]);
        assert!(err.is_err());
    }
}
