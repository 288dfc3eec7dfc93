//! Artifact writers. All CSVs carry a header row; floats use shortest
//! round-trip formatting so reruns are byte-identical and reloads are exact.

use std::path::Path;

use ndarray::Array2;

use super::compare::CompareReport;
use super::experiment::RunManifest;
use super::grid::GridResult;
use crate::error::Result;
use crate::eval::{decile_realized_by_interval, MetricsReport, PredictionSet};

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Prediction CSV: `t,entity_id,prediction` plus a trailing `model` column
/// for baseline outputs.
pub fn write_predictions_csv(
    path: &Path,
    set: &PredictionSet,
    model: Option<&str>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match model {
        Some(_) => w.write_record(["t", "entity_id", "prediction", "model"])?,
        None => w.write_record(["t", "entity_id", "prediction"])?,
    }
    for r in set.records() {
        let t = r.t.to_string();
        let p = fmt(r.predicted);
        match model {
            Some(m) => w.write_record([t.as_str(), &r.entity_id, &p, m])?,
            None => w.write_record([t.as_str(), &r.entity_id, &p])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a prediction CSV back (ignoring any model column).
pub fn read_predictions_csv(path: &Path) -> Result<Vec<(usize, String, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let t_idx = headers.iter().position(|h| h == "t").ok_or_else(|| {
        crate::error::Error::Panel("prediction csv missing column t".into())
    })?;
    let id_idx = headers
        .iter()
        .position(|h| h == "entity_id")
        .ok_or_else(|| crate::error::Error::Panel("missing entity_id".into()))?;
    let p_idx = headers
        .iter()
        .position(|h| h == "prediction")
        .ok_or_else(|| crate::error::Error::Panel("missing prediction".into()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t: usize = rec
            .get(t_idx)
            .unwrap_or("")
            .parse()
            .map_err(|_| crate::error::Error::CsvRow {
                row: i + 2,
                msg: "bad t".into(),
            })?;
        let p: f64 = rec
            .get(p_idx)
            .unwrap_or("")
            .parse()
            .map_err(|_| crate::error::Error::CsvRow {
                row: i + 2,
                msg: "bad prediction".into(),
            })?;
        out.push((t, rec.get(id_idx).unwrap_or("").to_string(), p));
    }
    Ok(out)
}

/// Writes the metric suite: a JSON summary plus one CSV per table.
pub fn write_metrics_files(
    dir: &Path,
    name: &str,
    metrics: &MetricsReport,
) -> Result<Vec<String>> {
    let mut written = Vec::new();

    let json_file = format!("metrics_{name}.json");
    std::fs::write(dir.join(&json_file), serde_json::to_string_pretty(metrics)?)?;
    written.push(json_file);

    let ic_file = format!("ic_series_{name}.csv");
    {
        let mut w = csv::Writer::from_path(dir.join(&ic_file))?;
        w.write_record(["t", "ic"])?;
        for (t, v) in &metrics.ic_series {
            w.write_record([t.to_string(), fmt(*v)])?;
        }
        w.flush()?;
    }
    written.push(ic_file);

    let decile_file = format!("decile_table_{name}.csv");
    {
        let mut w = csv::Writer::from_path(dir.join(&decile_file))?;
        w.write_record(["decile", "mean_predicted", "mean_realized"])?;
        for k in 0..10 {
            w.write_record([
                format!("P{}", k + 1),
                fmt(metrics.decile.mean_predicted[k]),
                fmt(metrics.decile.mean_realized[k]),
            ])?;
        }
        w.flush()?;
    }
    written.push(decile_file);

    let spread_file = format!("spread_series_{name}.csv");
    {
        let mut w = csv::Writer::from_path(dir.join(&spread_file))?;
        w.write_record(["t", "p10_minus_p1"])?;
        for (t, v) in &metrics.decile.spread_series {
            w.write_record([t.to_string(), fmt(*v)])?;
        }
        w.flush()?;
    }
    written.push(spread_file);

    Ok(written)
}

/// Cumulative mean realized return per decile, for decile-curve plots.
pub fn write_decile_cumulative_csv(
    dir: &Path,
    name: &str,
    set: &PredictionSet,
) -> Result<Vec<String>> {
    let file = format!("decile_cumulative_{name}.csv");
    let per_interval = decile_realized_by_interval(set)?;
    let mut w = csv::Writer::from_path(dir.join(&file))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=10).map(|k| format!("P{k}")));
    w.write_record(&header)?;
    let mut cum = [0.0f64; 10];
    for (t, means) in per_interval {
        let mut rec = vec![t.to_string()];
        for k in 0..10 {
            cum[k] += means[k];
            rec.push(fmt(cum[k]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(vec![file])
}

/// Per-member grid table: member, cell, score, selected flag.
pub fn write_grid_csv(dir: &Path, name: &str, grid: &[GridResult]) -> Result<Vec<String>> {
    let file = format!("grid_{name}.csv");
    let mut w = csv::Writer::from_path(dir.join(&file))?;
    w.write_record(["member", "l1", "eta", "window", "forget", "score", "selected"])?;
    for (m, g) in grid.iter().enumerate() {
        for (cell, score) in &g.scores {
            let (win, fg) = match cell.dts {
                Some((wd, f)) => (wd.to_string(), fmt(f)),
                None => (String::new(), String::new()),
            };
            w.write_record([
                m.to_string(),
                fmt(cell.l1),
                fmt(cell.eta),
                win,
                fg,
                fmt(*score),
                (*cell == g.selected).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![file])
}

/// Latent factor trajectory (t x feature).
pub fn write_psi_csv(path: &Path, psi: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..psi.ncols()).map(|j| format!("psi_{j:03}")));
    w.write_record(&header)?;
    for (t, row) in psi.rows().into_iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Feature-importance heatmap data (interval x feature).
pub fn write_fi_matrix_csv(path: &Path, intervals: &[usize], fi: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..fi.ncols()).map(|j| format!("f_{j:03}")));
    w.write_record(&header)?;
    for (row, &t) in intervals.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(fi.row(row).iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rolling 12-interval column means of the importance matrix (incomplete
/// leading windows average over the available prefix).
pub fn write_fi_rolling_csv(path: &Path, intervals: &[usize], fi: &Array2<f64>) -> Result<()> {
    let mut rolled = fi.clone();
    for j in 0..fi.ncols() {
        for i in 0..fi.nrows() {
            let start = i.saturating_sub(11);
            let sum: f64 = (start..=i).map(|k| fi[(k, j)]).sum();
            rolled[(i, j)] = sum / (i - start + 1) as f64;
        }
    }
    write_fi_matrix_csv(path, intervals, &rolled)
}

/// Yearly (t/12 bucket) column means of the importance matrix.
pub fn write_fi_yearly_csv(path: &Path, intervals: &[usize], fi: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["year".to_string()];
    header.extend((0..fi.ncols()).map(|j| format!("f_{j:03}")));
    w.write_record(&header)?;
    let mut rows: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (row, &t) in intervals.iter().enumerate() {
        let year = t / 12;
        match rows.last_mut() {
            Some(last) if last.0 == year => {
                for j in 0..fi.ncols() {
                    last.1[j] += fi[(row, j)];
                }
                last.2 += 1;
            }
            _ => rows.push((year, fi.row(row).to_vec(), 1)),
        }
    }
    for (year, sums, count) in rows {
        let mut rec = vec![year.to_string()];
        rec.extend(sums.iter().map(|s| fmt(s / count as f64)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Cross-model correlation series.
pub fn write_compare_csv(dir: &Path, cmp: &CompareReport) -> Result<Vec<String>> {
    let file = "model_correlation.csv".to_string();
    let mut w = csv::Writer::from_path(dir.join(&file))?;
    w.write_record(["t", "correlation", "rolling_12"])?;
    for ((t, c), (_, r)) in cmp.per_interval.iter().zip(&cmp.rolling_12) {
        w.write_record([t.to_string(), fmt(*c), fmt(*r)])?;
    }
    w.flush()?;
    Ok(vec![file])
}

/// Per-iteration early-stopping trace (k, train_loss, val_loss, is_best).
pub fn write_stop_trace_csv(path: &Path, trace: &[crate::earlystop::TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "train_loss", "val_loss", "is_best"])?;
    for (k, train, val, best) in trace {
        w.write_record([k.to_string(), fmt(*train), fmt(*val), best.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}
