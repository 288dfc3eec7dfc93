//! Panel CSV schema (the on-disk contract):
//! header row; `date` as an integer interval or ISO-8601 day; `entity_id`
//! string; feature columns prefixed `f_`; `ret` target; optional `mcap`;
//! optional `grp_*` label columns. Empty cell = missing value. UTF-8,
//! decimal point, RFC-4180-style quoting.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::PanelSlice;
use crate::error::{Error, Result};

/// Column-naming contract; the defaults match the documented schema.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub date_col: String,
    pub entity_col: String,
    pub ret_col: String,
    pub mcap_col: String,
    pub feature_prefix: String,
    pub group_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_col: "date".into(),
            entity_col: "entity_id".into(),
            ret_col: "ret".into(),
            mcap_col: "mcap".into(),
            feature_prefix: "f_".into(),
            group_prefix: "grp_".into(),
        }
    }
}

fn parse_cell(raw: &str, row: usize, col: &str) -> Result<f64> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(f64::NAN);
    }
    trimmed.parse::<f64>().map_err(|_| Error::CsvRow {
        row,
        msg: format!("unparseable numeric {trimmed:?} in column {col}"),
    })
}

/// Dates sort numerically when every date parses as an integer, otherwise
/// lexicographically (chronological for ISO-8601 strings).
fn date_sort_key(dates: &[String]) -> Vec<usize> {
    let all_int: Option<Vec<i64>> = dates.iter().map(|d| d.parse::<i64>().ok()).collect();
    let mut order: Vec<usize> = (0..dates.len()).collect();
    match all_int {
        Some(ints) => order.sort_by_key(|&i| ints[i]),
        None => order.sort_by(|&a, &b| dates[a].cmp(&dates[b])),
    }
    order
}

pub fn load_panel<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<PanelSlice>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col_index = |name: &str| headers.iter().position(|h| h == name);

    let date_idx = col_index(&schema.date_col).ok_or_else(|| {
        Error::Panel(format!("missing mandatory column {}", schema.date_col))
    })?;
    let entity_idx = col_index(&schema.entity_col).ok_or_else(|| {
        Error::Panel(format!("missing mandatory column {}", schema.entity_col))
    })?;
    let ret_idx = col_index(&schema.ret_col)
        .ok_or_else(|| Error::Panel(format!("missing mandatory column {}", schema.ret_col)))?;
    let mcap_idx = col_index(&schema.mcap_col);
    let feature_idx: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(&schema.feature_prefix))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let group_idx: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(&schema.group_prefix))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::Panel(format!(
            "no feature columns with prefix {}",
            schema.feature_prefix
        )));
    }

    struct Row {
        entity: String,
        features: Vec<f64>,
        ret: f64,
        mcap: Option<f64>,
        groups: Vec<String>,
    }
    // Preserve first-seen order of dates, then sort chronologically.
    let mut by_date: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    let mut seen: std::collections::HashSet<(String, String)> = std::collections::HashSet::new();

    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 2; // 1-based, after the header line
        let record = record?;
        let date = record.get(date_idx).unwrap_or("").trim().to_string();
        let entity = record.get(entity_idx).unwrap_or("").trim().to_string();
        if date.is_empty() || entity.is_empty() {
            return Err(Error::CsvRow {
                row: row_no,
                msg: "empty date or entity_id".into(),
            });
        }
        if !seen.insert((date.clone(), entity.clone())) {
            return Err(Error::CsvRow {
                row: row_no,
                msg: format!("duplicate (date, entity) pair ({date}, {entity})"),
            });
        }
        let ret = parse_cell(record.get(ret_idx).unwrap_or(""), row_no, &schema.ret_col)?;
        if ret.is_nan() {
            return Err(Error::CsvRow {
                row: row_no,
                msg: format!("missing {} value", schema.ret_col),
            });
        }
        let features = feature_idx
            .iter()
            .map(|(idx, name)| parse_cell(record.get(*idx).unwrap_or(""), row_no, name))
            .collect::<Result<Vec<f64>>>()?;
        let mcap = match mcap_idx {
            Some(idx) => Some(parse_cell(record.get(idx).unwrap_or(""), row_no, &schema.mcap_col)?),
            None => None,
        };
        let groups = group_idx
            .iter()
            .map(|(idx, _)| record.get(*idx).unwrap_or("").trim().to_string())
            .collect();
        by_date.entry(date).or_default().push(Row {
            entity,
            features,
            ret,
            mcap,
            groups,
        });
    }
    if by_date.is_empty() {
        return Err(Error::Panel("panel file has no data rows".into()));
    }

    let dates: Vec<String> = by_date.keys().cloned().collect();
    let order = date_sort_key(&dates);
    let m = feature_idx.len();

    let mut slices = Vec::with_capacity(order.len());
    for (t, &oi) in order.iter().enumerate() {
        let date = &dates[oi];
        let rows = &by_date[date];
        let n = rows.len();
        let mut x = Array2::from_elem((n, m), f64::NAN);
        let mut r = Array1::zeros(n);
        let mut ids = Vec::with_capacity(n);
        let mut mcap = mcap_idx.map(|_| Array1::from_elem(n, f64::NAN));
        let mut groups: BTreeMap<String, Vec<String>> = group_idx
            .iter()
            .map(|(_, name)| (name.clone(), Vec::with_capacity(n)))
            .collect();
        for (i, row) in rows.iter().enumerate() {
            ids.push(row.entity.clone());
            for (j, &v) in row.features.iter().enumerate() {
                x[(i, j)] = v;
            }
            r[i] = row.ret;
            if let (Some(mc), Some(v)) = (mcap.as_mut(), row.mcap) {
                mc[i] = v;
            }
            for ((_, name), g) in group_idx.iter().zip(&row.groups) {
                groups.get_mut(name).expect("group key").push(g.clone());
            }
        }
        let mut slice = PanelSlice::new(t, date.clone(), ids, x, r)?;
        if let Some(mc) = mcap {
            slice = slice.with_mcap(mc)?;
        }
        slice.groups = groups;
        slices.push(slice);
    }
    Ok(slices)
}

pub fn load_panel_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<Vec<PanelSlice>> {
    load_panel(File::open(path)?, schema)
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Shortest round-trip formatting keeps write/load exact.
        format!("{v}")
    }
}

pub fn write_panel<W: Write>(slices: &[PanelSlice], schema: &CsvSchema, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let m = slices.first().map(|s| s.num_features()).unwrap_or(0);
    let has_mcap = slices.iter().any(|s| s.mcap.is_some());
    let group_names: Vec<String> = slices
        .first()
        .map(|s| s.groups.keys().cloned().collect())
        .unwrap_or_default();

    let mut header = vec![schema.date_col.clone(), schema.entity_col.clone()];
    for j in 0..m {
        header.push(format!("{}{:03}", schema.feature_prefix, j));
    }
    header.push(schema.ret_col.clone());
    if has_mcap {
        header.push(schema.mcap_col.clone());
    }
    header.extend(group_names.iter().cloned());
    wtr.write_record(&header)?;

    for s in slices {
        for i in 0..s.len() {
            let mut rec = vec![s.date.clone(), s.entity_ids[i].clone()];
            for j in 0..m {
                rec.push(fmt_cell(s.x[(i, j)]));
            }
            rec.push(fmt_cell(s.r[i]));
            if has_mcap {
                rec.push(s.mcap.as_ref().map(|mc| fmt_cell(mc[i])).unwrap_or_default());
            }
            for g in &group_names {
                rec.push(s.groups.get(g).map(|v| v[i].clone()).unwrap_or_default());
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_panel_csv<P: AsRef<Path>>(
    slices: &[PanelSlice],
    schema: &CsvSchema,
    path: P,
) -> Result<()> {
    write_panel(slices, schema, File::create(path)?)
}
