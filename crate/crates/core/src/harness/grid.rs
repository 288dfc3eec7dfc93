//! Hyperparameter grid enumeration and selection. Cells are ordered
//! lexicographically by (l1, eta, window, forget); ties in validation score
//! resolve to the earliest cell in that order.

use serde::Serialize;

use super::config::{GridConfig, ModelKind};
use crate::error::{Error, Result};
use crate::eval::PredictionSet;
use crate::panel::PanelSlice;

/// One grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub l1: f64,
    pub eta: f64,
    /// (window, forget) for DTS-SGD cells.
    pub dts: Option<(usize, f64)>,
}

impl std::fmt::Display for GridCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.dts {
            Some((w, a)) => write!(f, "l1={} eta={} w={} alpha={}", self.l1, self.eta, w, a),
            None => write!(f, "l1={} eta={}", self.l1, self.eta),
        }
    }
}

/// Enumerates the grid for one model in deterministic order.
pub fn grid_cells(grid: &GridConfig, model: ModelKind) -> Vec<GridCell> {
    let mut l1s = grid.l1.clone();
    l1s.sort_by(|a, b| a.partial_cmp(b).expect("finite l1"));
    let mut etas = grid.eta.clone();
    etas.sort_by(|a, b| a.partial_cmp(b).expect("finite eta"));
    let mut cells = Vec::new();
    match model {
        ModelKind::Oes | ModelKind::Dnn => {
            for &l1 in &l1s {
                for &eta in &etas {
                    cells.push(GridCell { l1, eta, dts: None });
                }
            }
        }
        ModelKind::DtsSgd => {
            let mut windows = grid.dts_window.clone();
            windows.sort_unstable();
            let mut forgets = grid.dts_forget.clone();
            forgets.sort_by(|a, b| a.partial_cmp(b).expect("finite forget"));
            for &l1 in &l1s {
                for &eta in &etas {
                    for &w in &windows {
                        for &a in &forgets {
                            cells.push(GridCell {
                                l1,
                                eta,
                                dts: Some((w, a)),
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Grid outcome for one scoring unit (one ensemble member).
#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    /// (cell, validation score) in enumeration order; diverged cells carry
    /// an infinite score.
    pub scores: Vec<(GridCell, f64)>,
    pub selected: GridCell,
    pub selected_score: f64,
}

/// Picks the minimum-score cell; earlier cells win ties. Errors when every
/// cell diverged.
pub fn select_cell(scores: Vec<(GridCell, f64)>) -> Result<GridResult> {
    if scores.is_empty() {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    let mut best: Option<(GridCell, f64)> = None;
    for &(cell, score) in &scores {
        if score.is_finite() && best.map_or(true, |(_, b)| score < b) {
            best = Some((cell, score));
        }
    }
    let (selected, selected_score) =
        best.ok_or_else(|| Error::Diverged("all grid cells diverged".into()))?;
    Ok(GridResult {
        scores,
        selected,
        selected_score,
    })
}

/// Monthly average MSE of interval predictions against the panel's realized
/// returns over positions `[from, to)`. Intervals without predictions make
/// the score infinite (a halted chain must not win the grid).
pub fn monthly_average_mse(
    preds: &[(usize, ndarray::Array1<f64>)],
    panels: &[PanelSlice],
    from: usize,
    to: usize,
) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in from..to {
        let slice = &panels[p];
        let Some((_, pr)) = preds.iter().find(|(t, _)| *t == slice.t) else {
            return f64::INFINITY;
        };
        if pr.len() != slice.len() {
            return f64::INFINITY;
        }
        let n = slice.len() as f64;
        let mse = pr
            .iter()
            .zip(slice.r.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        if !mse.is_finite() {
            return f64::INFINITY;
        }
        sum += mse;
        count += 1;
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Restricts a prediction set to interval ids present in `panels[from..]`,
/// used to slice out-of-sample records.
pub fn restrict_to_positions(
    set: &PredictionSet,
    panels: &[PanelSlice],
    from: usize,
) -> Result<PredictionSet> {
    let keep: std::collections::BTreeSet<usize> =
        panels[from..].iter().map(|s| s.t).collect();
    PredictionSet::from_records(
        set.records()
            .iter()
            .filter(|r| keep.contains(&r.t))
            .cloned()
            .collect(),
    )
}
