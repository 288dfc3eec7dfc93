//! Cross-sectional preprocessing: rank scaling to [-1, 1] with median/zero
//! fill, winsorized target standardization, and the investable market-cap
//! breakpoint filter with frozen membership between rebalances.

use std::collections::HashSet;

use ndarray::Array1;

use super::PanelSlice;
use crate::error::{Error, Result};

/// Percentile by linear interpolation between order statistics: with sorted
/// values v_0..v_{n-1}, the p-th percentile sits at rank h = (n-1) * p/100
/// and interpolates v_floor(h) toward v_floor(h)+1.
pub fn percentile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    assert!((0.0..=100.0).contains(&p), "percentile out of range");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Market-cap breakpoint configuration for the investable filter.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BreakpointConfig {
    /// Percentile of market cap within the flagged group (e.g. 5.0).
    pub percentile: f64,
    /// Group column whose labels flag the breakpoint universe.
    pub group_col: String,
    /// Label value that flags an entity (e.g. "NYSE").
    pub group_value: String,
    /// Rebalance when `position % period == phase` (default: the 6th
    /// interval of every 12, i.e. phase 5).
    pub rebalance_phase: usize,
    /// Rebalance period in intervals.
    pub rebalance_period: usize,
}

impl Default for BreakpointConfig {
    fn default() -> Self {
        Self {
            percentile: 5.0,
            group_col: "grp_exchange".into(),
            group_value: "NYSE".into(),
            rebalance_phase: 5,
            rebalance_period: 12,
        }
    }
}

/// Preprocessing pipeline knobs. Missing features are filled with the
/// cross-sectional median of the rank-scaled column, or zero when the whole
/// column is missing.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PreprocessConfig {
    pub rank_scale_features: bool,
    pub standardize_targets: bool,
    pub winsorize_lower_pct: f64,
    pub winsorize_upper_pct: f64,
    pub breakpoint: Option<BreakpointConfig>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            rank_scale_features: true,
            standardize_targets: false,
            winsorize_lower_pct: 1.0,
            winsorize_upper_pct: 99.0,
            breakpoint: None,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.winsorize_lower_pct, self.winsorize_upper_pct);
        if !(0.0 < lo && lo < hi && hi < 100.0) {
            return Err(Error::InvalidConfig(format!(
                "winsorize bounds must satisfy 0 < lower < upper < 100, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Average ranks (1-based, ties averaged) over the given values.
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
        // Positions i..=j share the average of ranks i+1..=j+1.
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Rank-scales every feature column to [-1, 1]:
/// non-missing values become `2 * (rank - 1)/(n_valid - 1) - 1` with average
/// ranks for ties (a single valid value maps to 0), then missing cells are
/// filled with the median of the scaled column, or 0 if the whole column is
/// missing.
pub fn rank_scale(slice: &PanelSlice) -> PanelSlice {
    let mut out = slice.clone();
    let n = slice.len();
    for j in 0..slice.num_features() {
        let col: Vec<(usize, f64)> = (0..n)
            .filter(|&i| !slice.x[(i, j)].is_nan())
            .map(|i| (i, slice.x[(i, j)]))
            .collect();
        let n_valid = col.len();
        let mut scaled = vec![f64::NAN; n];
        if n_valid == 1 {
            scaled[col[0].0] = 0.0;
        } else if n_valid > 1 {
            let values: Vec<f64> = col.iter().map(|&(_, v)| v).collect();
            let ranks = average_ranks(&values);
            for (k, &(i, _)) in col.iter().enumerate() {
                scaled[i] = 2.0 * (ranks[k] - 1.0) / (n_valid as f64 - 1.0) - 1.0;
            }
        }
        let fill = if n_valid == 0 {
            0.0
        } else {
            let mut valid: Vec<f64> = scaled.iter().copied().filter(|v| !v.is_nan()).collect();
            valid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            median(&valid)
        };
        for i in 0..n {
            out.x[(i, j)] = if scaled[i].is_nan() { fill } else { scaled[i] };
        }
    }
    out
}

/// Winsorizes targets at the configured percentiles, then standardizes to
/// cross-sectional mean 0 and sample (n-1) standard deviation 1.
pub fn winsorize_standardize(slice: &PanelSlice, lower_pct: f64, upper_pct: f64) -> Result<PanelSlice> {
    let n = slice.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "winsorize_standardize needs n >= 2, slice {} has {n}",
            slice.t
        )));
    }
    let mut sorted: Vec<f64> = slice.r.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite returns"));
    let lo = percentile_linear(&sorted, lower_pct);
    let hi = percentile_linear(&sorted, upper_pct);
    let clamped: Array1<f64> = slice.r.mapv(|v| v.clamp(lo, hi));
    let mean = clamped.sum() / n as f64;
    let var = clamped.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::Degenerate(format!(
            "constant cross-section after winsorizing in slice {}",
            slice.t
        )));
    }
    let std = var.sqrt();
    let mut out = slice.clone();
    out.r = clamped.mapv(|v| (v - mean) / std);
    Ok(out)
}

/// Applies the market-cap breakpoint filter: at each rebalance position the
/// breakpoint is the configured percentile of market cap within the flagged
/// group; entities below it are dropped market-wide and the surviving
/// membership is frozen until the next rebalance. Intervals before the first
/// rebalance pass through unfiltered.
pub fn investable_filter(slices: &[PanelSlice], cfg: &BreakpointConfig) -> Result<Vec<PanelSlice>> {
    if cfg.rebalance_period == 0 || cfg.rebalance_phase >= cfg.rebalance_period {
        return Err(Error::InvalidConfig(
            "rebalance_phase must be < rebalance_period".into(),
        ));
    }
    if !(0.0..=100.0).contains(&cfg.percentile) {
        return Err(Error::InvalidConfig("breakpoint percentile range".into()));
    }
    let mut members: Option<HashSet<String>> = None;
    let mut out = Vec::with_capacity(slices.len());
    for (pos, slice) in slices.iter().enumerate() {
        if pos % cfg.rebalance_period == cfg.rebalance_phase {
            let mcap = slice.mcap.as_ref().ok_or_else(|| {
                Error::Panel(format!("slice {} has no market caps", slice.t))
            })?;
            let labels = slice.groups.get(&cfg.group_col).ok_or_else(|| {
                Error::Panel(format!(
                    "slice {} has no group column {}",
                    slice.t, cfg.group_col
                ))
            })?;
            let mut flagged: Vec<f64> = (0..slice.len())
                .filter(|&i| labels[i] == cfg.group_value && !mcap[i].is_nan())
                .map(|i| mcap[i])
                .collect();
            if flagged.is_empty() {
                return Err(Error::Degenerate(format!(
                    "no flagged entities at rebalance (slice {})",
                    slice.t
                )));
            }
            flagged.sort_by(|a, b| a.partial_cmp(b).expect("finite mcap"));
            let breakpoint = percentile_linear(&flagged, cfg.percentile);
            let keep: HashSet<String> = (0..slice.len())
                .filter(|&i| !mcap[i].is_nan() && mcap[i] >= breakpoint)
                .map(|i| slice.entity_ids[i].clone())
                .collect();
            members = Some(keep);
        }
        match &members {
            Some(keep) => out.push(slice.filter_to_ids(keep)),
            None => out.push(slice.clone()),
        }
    }
    Ok(out)
}

/// Runs the configured pipeline over a sequence: breakpoint filter first
/// (memberships come from raw market caps), then per-slice feature rank
/// scaling and target standardization.
pub fn preprocess_sequence(
    slices: &[PanelSlice],
    cfg: &PreprocessConfig,
) -> Result<Vec<PanelSlice>> {
    cfg.validate()?;
    let filtered = match &cfg.breakpoint {
        Some(bp) => investable_filter(slices, bp)?,
        None => slices.to_vec(),
    };
    let mut out = Vec::with_capacity(filtered.len());
    for s in &filtered {
        let mut s2 = if cfg.rank_scale_features {
            rank_scale(s)
        } else {
            s.clone()
        };
        if cfg.standardize_targets {
            s2 = winsorize_standardize(&s2, cfg.winsorize_lower_pct, cfg.winsorize_upper_pct)?;
        }
        out.push(s2);
    }
    Ok(out)
}
