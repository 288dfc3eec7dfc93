//! Model runners and end-to-end experiment orchestration.
//!
//! Hyperparameter tuning is per ensemble member: each member scores every
//! grid cell on the validation block with its own seed and carries its own
//! winner into the out-of-sample run. Reported hyperparameters are averages
//! over members.

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use serde::Serialize;

use super::compare::compare_models;
use super::config::{DataSource, ExperimentConfig, FitConfig, ModelKind};
use super::grid::{grid_cells, monthly_average_mse, restrict_to_positions, select_cell, GridCell, GridResult};
use super::report;
use crate::baselines::{dts_sgd_run, expanding_window_chain, DtsConfig, WindowSchedule};
use crate::earlystop::{early_stopping, StopConfig};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, ensemble_combine, feature_importance_matrix, MetricsReport, PredictionSet};
use crate::nn::{forward_eval, LossConfig, Topology, WeightSet};
use crate::oes::oes_chain;
use crate::panel::{load_panel_csv, pool, preprocess_sequence, validate_sequence, CsvSchema, PanelSlice};
use crate::rng::{derive_seed, SeedStream};
use crate::synthgen::generate;

fn stop_cfg(fit: &FitConfig, batch_size: usize, eta: f64) -> StopConfig {
    StopConfig {
        max_iterations: fit.max_iterations,
        tolerance: fit.tolerance,
        patience: fit.patience,
        step_size: eta,
        batch_size,
    }
}

/// Panel plus diagnostics kept for reporting.
pub struct PreparedData {
    pub panels: Vec<PanelSlice>,
    /// Latent factor trajectory when the data is synthetic.
    pub psi: Option<ndarray::Array2<f64>>,
}

/// Generates or loads the panel named by the config and applies the
/// configured preprocessing.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let prepared = match &cfg.data {
        DataSource::Synthetic(synth) => {
            let out = generate(synth)?;
            PreparedData {
                panels: out.slices,
                psi: Some(out.psi),
            }
        }
        DataSource::Csv { path, preprocess } => {
            let slices = load_panel_csv(path, &CsvSchema::default())?;
            let slices = match preprocess {
                Some(p) => preprocess_sequence(&slices, p)?,
                None => slices,
            };
            PreparedData {
                panels: slices,
                psi: None,
            }
        }
    };
    validate_sequence(&prepared.panels)?;
    if prepared.panels.len() <= cfg.split.val_end {
        return Err(Error::InvalidConfig(format!(
            "panel has {} intervals, no out-of-sample range beyond val_end {}",
            prepared.panels.len(),
            cfg.split.val_end
        )));
    }
    Ok(prepared)
}

/// Per-interval statistics of one online chain, for the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct OesIntervalStat {
    pub t: usize,
    pub tau_prime: usize,
    pub passes: usize,
    pub tau_mean: f64,
    pub val_loss: f64,
    pub gradient_deficit: f64,
}

/// Everything a single model produced.
pub struct ModelRun {
    pub model: ModelKind,
    pub member_seeds: Vec<u64>,
    /// Per-member grid outcome.
    pub grid: Vec<GridResult>,
    /// Out-of-sample predictions, ensemble-averaged.
    pub oos_predictions: PredictionSet,
    /// Per member, per interval (OES only).
    pub oes_stats: Option<Vec<Vec<OesIntervalStat>>>,
    /// Per-interval member prediction weights (OES with snapshots).
    pub snapshots: Option<Vec<(usize, Vec<WeightSet>)>>,
    /// (member, interval id) where a DTS chain halted on a non-finite
    /// gradient.
    pub dts_halts: Vec<(usize, usize)>,
}

fn model_ordinal(model: ModelKind) -> u64 {
    match model {
        ModelKind::Oes => 0,
        ModelKind::Dnn => 1,
        ModelKind::DtsSgd => 2,
    }
}

fn member_seed(cfg: &ExperimentConfig, model: ModelKind, member: usize) -> u64 {
    derive_seed(derive_seed(cfg.seed, model_ordinal(model)), member as u64)
}

fn average_predictions(members: &[Vec<(usize, Array1<f64>)>]) -> Vec<(usize, Array1<f64>)> {
    let steps = members[0].len();
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = members[0][i].0;
        let mut acc = members[0][i].1.clone();
        for m in &members[1..] {
            acc += &m[i].1;
        }
        acc /= members.len() as f64;
        out.push((t, acc));
    }
    out
}

fn run_oes(panels: &[PanelSlice], cfg: &ExperimentConfig, topo: &Topology) -> Result<ModelRun> {
    let cells = grid_cells(&cfg.grid, ModelKind::Oes);
    // The grid only ever sees the train+validation prefix.
    let tuneable = &panels[..cfg.split.val_end];
    let mut grid = Vec::with_capacity(cfg.ensemble);
    let mut seeds = Vec::with_capacity(cfg.ensemble);
    let mut member_preds = Vec::with_capacity(cfg.ensemble);
    let mut member_stats = Vec::with_capacity(cfg.ensemble);
    let mut snapshots: Option<Vec<(usize, Vec<WeightSet>)>> = None;

    for member in 0..cfg.ensemble {
        let seed = member_seed(cfg, ModelKind::Oes, member);
        seeds.push(seed);
        let mut scores = Vec::with_capacity(cells.len());
        for cell in &cells {
            let stop = stop_cfg(&cfg.fit, cfg.batch.oes, cell.eta);
            let loss = LossConfig::new(cell.l1)?;
            let score = match oes_chain(topo, tuneable, &stop, &loss, seed, false) {
                Ok(chain) => monthly_average_mse(
                    &chain.predictions,
                    panels,
                    cfg.split.train_end,
                    cfg.split.val_end,
                ),
                Err(Error::Diverged(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            scores.push((*cell, score));
        }
        let result = select_cell(scores)?;
        let stop = stop_cfg(&cfg.fit, cfg.batch.oes, result.selected.eta);
        let loss = LossConfig::new(result.selected.l1)?;
        let chain = oes_chain(topo, panels, &stop, &loss, seed, cfg.keep_snapshots)?;

        member_stats.push(
            chain
                .reports
                .iter()
                .map(|r| OesIntervalStat {
                    t: r.t,
                    tau_prime: r.tau_prime,
                    passes: r.passes_used,
                    tau_mean: r.tau_mean,
                    val_loss: r.val_loss,
                    gradient_deficit: r.gradient_deficit,
                })
                .collect::<Vec<_>>(),
        );
        if cfg.keep_snapshots {
            let snaps = snapshots.get_or_insert_with(Vec::new);
            for (i, report) in chain.reports.iter().enumerate() {
                let theta = report.theta_t.clone().expect("weights kept");
                if member == 0 {
                    snaps.push((report.t, vec![theta]));
                } else {
                    snaps[i].1.push(theta);
                }
            }
        }
        member_preds.push(chain.predictions);
        grid.push(result);
    }

    let averaged = average_predictions(&member_preds);
    let all = PredictionSet::from_interval_predictions(panels, &averaged)?;
    let oos = restrict_to_positions(&all, panels, cfg.split.val_end)?;
    // Keep only out-of-sample snapshots (the replay target).
    let snapshots = snapshots.map(|snaps| {
        let oos_ids: std::collections::BTreeSet<usize> =
            panels[cfg.split.val_end..].iter().map(|s| s.t).collect();
        snaps
            .into_iter()
            .filter(|(t, _)| oos_ids.contains(t))
            .collect()
    });

    Ok(ModelRun {
        model: ModelKind::Oes,
        member_seeds: seeds,
        grid,
        oos_predictions: oos,
        oes_stats: Some(member_stats),
        snapshots,
        dts_halts: Vec::new(),
    })
}

/// Scores one pooled fit: early-stop on the pooled blocks, then the monthly
/// average MSE of frozen-weight predictions over the validation positions.
fn dnn_tuning_score(
    panels: &[PanelSlice],
    train: std::ops::Range<usize>,
    val: std::ops::Range<usize>,
    topo: &Topology,
    stop: &StopConfig,
    loss: &LossConfig,
    seed: u64,
) -> Result<f64> {
    let (xt, rt) = pool(&panels[train])?;
    let (xv, rv) = pool(&panels[val.clone()])?;
    let mut stream = SeedStream::new(seed);
    let theta0 = WeightSet::init(topo, &mut stream);
    let es = early_stopping(
        topo,
        &theta0,
        xt.view(),
        rt.view(),
        xv.view(),
        rv.view(),
        stop,
        loss,
        &mut stream,
        None,
    )?;
    if es.diverged {
        return Ok(f64::INFINITY);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in val {
        let pr = forward_eval(topo, &es.weights_best, panels[p].x.view())?;
        let n = panels[p].len() as f64;
        sum += pr
            .iter()
            .zip(panels[p].r.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        count += 1;
    }
    Ok(sum / count.max(1) as f64)
}

fn run_dnn(panels: &[PanelSlice], cfg: &ExperimentConfig, topo: &Topology) -> Result<ModelRun> {
    let cells = grid_cells(&cfg.grid, ModelKind::Dnn);
    let schedule = WindowSchedule {
        train_start: 0,
        train_end: cfg.split.train_end,
        val_end: cfg.split.val_end,
        refit_every: cfg.refit_every,
        expanding: cfg.expanding,
    };
    schedule.validate(panels.len())?;

    let mut grid = Vec::with_capacity(cfg.ensemble);
    let mut seeds = Vec::with_capacity(cfg.ensemble);
    let mut member_preds = Vec::with_capacity(cfg.ensemble);

    for member in 0..cfg.ensemble {
        let seed = member_seed(cfg, ModelKind::Dnn, member);
        seeds.push(seed);
        if cfg.retune_each_refit {
            let (preds, gr) = dnn_retuned_chain(panels, cfg, topo, &schedule, &cells, seed)?;
            member_preds.push(preds);
            grid.push(gr);
        } else {
            let mut scores = Vec::with_capacity(cells.len());
            for cell in &cells {
                let stop = stop_cfg(&cfg.fit, cfg.batch.dnn, cell.eta);
                let loss = LossConfig::new(cell.l1)?;
                let score = match dnn_tuning_score(
                    panels,
                    0..cfg.split.train_end,
                    cfg.split.train_end..cfg.split.val_end,
                    topo,
                    &stop,
                    &loss,
                    seed,
                ) {
                    Ok(s) => s,
                    Err(Error::Diverged(_)) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                scores.push((*cell, score));
            }
            let result = select_cell(scores)?;
            let stop = stop_cfg(&cfg.fit, cfg.batch.dnn, result.selected.eta);
            let loss = LossConfig::new(result.selected.l1)?;
            let run = expanding_window_chain(topo, panels, &schedule, &stop, &loss, seed)?;
            member_preds.push(run.predictions);
            grid.push(result);
        }
    }

    let averaged = average_predictions(&member_preds);
    let all = PredictionSet::from_interval_predictions(panels, &averaged)?;
    let oos = restrict_to_positions(&all, panels, cfg.split.val_end)?;
    Ok(ModelRun {
        model: ModelKind::Dnn,
        member_seeds: seeds,
        grid,
        oos_predictions: oos,
        oes_stats: None,
        snapshots: None,
        dts_halts: Vec::new(),
    })
}

/// Walk-forward run that re-tunes the grid at every refit; the winning
/// cell's early-stopped weights serve until the next refit. The reported
/// GridResult is the first refit's table.
fn dnn_retuned_chain(
    panels: &[PanelSlice],
    cfg: &ExperimentConfig,
    topo: &Topology,
    schedule: &WindowSchedule,
    cells: &[GridCell],
    seed: u64,
) -> Result<(Vec<(usize, Array1<f64>)>, GridResult)> {
    let total = panels.len();
    let mut predictions = Vec::new();
    let mut first_grid: Option<GridResult> = None;
    let mut k = 0usize;
    loop {
        let shift = k * schedule.refit_every;
        let tstart = if schedule.expanding {
            schedule.train_start
        } else {
            schedule.train_start + shift
        };
        let train = tstart..schedule.train_end + shift;
        let val = schedule.train_end + shift..schedule.val_end + shift;
        let pred_start = schedule.val_end + shift;
        let pred_end = (pred_start + schedule.refit_every).min(total);
        if pred_start >= pred_end {
            break;
        }
        let refit_seed = derive_seed(seed, k as u64);
        let mut scores = Vec::with_capacity(cells.len());
        let mut fitted: Vec<Option<WeightSet>> = Vec::with_capacity(cells.len());
        for cell in cells {
            let stop = stop_cfg(&cfg.fit, cfg.batch.dnn, cell.eta);
            let loss = LossConfig::new(cell.l1)?;
            let (xt, rt) = pool(&panels[train.clone()])?;
            let (xv, rv) = pool(&panels[val.clone()])?;
            let mut stream = SeedStream::new(refit_seed);
            let theta0 = WeightSet::init(topo, &mut stream);
            let es = early_stopping(
                topo,
                &theta0,
                xt.view(),
                rt.view(),
                xv.view(),
                rv.view(),
                &stop,
                &loss,
                &mut stream,
                None,
            )?;
            if es.diverged {
                scores.push((*cell, f64::INFINITY));
                fitted.push(None);
                continue;
            }
            let mut sum = 0.0;
            for p in val.clone() {
                let pr = forward_eval(topo, &es.weights_best, panels[p].x.view())?;
                let n = panels[p].len() as f64;
                sum += pr
                    .iter()
                    .zip(panels[p].r.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / n;
            }
            scores.push((*cell, sum / val.len() as f64));
            fitted.push(Some(es.weights_best));
        }
        let result = select_cell(scores)?;
        let winner_idx = cells
            .iter()
            .position(|c| *c == result.selected)
            .expect("selected cell is in the grid");
        let weights = fitted[winner_idx].clone().expect("winner converged");
        for p in pred_start..pred_end {
            let pr = forward_eval(topo, &weights, panels[p].x.view())?;
            predictions.push((panels[p].t, pr));
        }
        if first_grid.is_none() {
            first_grid = Some(result);
        }
        if pred_end >= total {
            break;
        }
        k += 1;
    }
    Ok((predictions, first_grid.expect("at least one refit")))
}

fn run_dts(panels: &[PanelSlice], cfg: &ExperimentConfig, topo: &Topology) -> Result<ModelRun> {
    let cells = grid_cells(&cfg.grid, ModelKind::DtsSgd);
    let tuneable = &panels[..cfg.split.val_end];
    let mut grid = Vec::with_capacity(cfg.ensemble);
    let mut seeds = Vec::with_capacity(cfg.ensemble);
    let mut member_preds = Vec::with_capacity(cfg.ensemble);
    let mut halts = Vec::new();

    for member in 0..cfg.ensemble {
        let seed = member_seed(cfg, ModelKind::DtsSgd, member);
        seeds.push(seed);
        let mut scores = Vec::with_capacity(cells.len());
        for cell in &cells {
            let (window, forget) = cell.dts.expect("dts cell");
            let dts = DtsConfig {
                window,
                forget,
                step_size: cell.eta,
            };
            let loss = LossConfig::new(cell.l1)?;
            let run = dts_sgd_run(topo, tuneable, &dts, &loss, seed)?;
            let score = if run.diverged_at.is_some() {
                f64::INFINITY
            } else {
                monthly_average_mse(
                    &run.predictions,
                    panels,
                    cfg.split.train_end,
                    cfg.split.val_end,
                )
            };
            scores.push((*cell, score));
        }
        let result = select_cell(scores)?;
        let (window, forget) = result.selected.dts.expect("dts cell");
        let dts = DtsConfig {
            window,
            forget,
            step_size: result.selected.eta,
        };
        let loss = LossConfig::new(result.selected.l1)?;
        let run = dts_sgd_run(topo, panels, &dts, &loss, seed)?;
        if let Some(t) = run.diverged_at {
            halts.push((member, t));
        }
        member_preds.push(run.predictions);
        grid.push(result);
    }

    // Halted chains may cover fewer intervals; average only over full
    // coverage (chains are expected to complete on this benchmark).
    let min_steps = member_preds.iter().map(|p| p.len()).min().unwrap_or(0);
    let trimmed: Vec<Vec<(usize, Array1<f64>)>> = member_preds
        .iter()
        .map(|p| p[..min_steps].to_vec())
        .collect();
    let averaged = average_predictions(&trimmed);
    let all = PredictionSet::from_interval_predictions(panels, &averaged)?;
    let oos = restrict_to_positions(&all, panels, cfg.split.val_end)?;
    Ok(ModelRun {
        model: ModelKind::DtsSgd,
        member_seeds: seeds,
        grid,
        oos_predictions: oos,
        oes_stats: None,
        snapshots: None,
        dts_halts: halts,
    })
}

/// Runs one model end to end (grid tuning on the train+validation prefix,
/// then the out-of-sample protocol).
pub fn run_model(
    panels: &[PanelSlice],
    cfg: &ExperimentConfig,
    model: ModelKind,
) -> Result<ModelRun> {
    cfg.validate()?;
    let topo = Topology::new(
        panels[0].num_features(),
        cfg.net.hidden.clone(),
        cfg.net.batch_norm,
    )?;
    match model {
        ModelKind::Oes => run_oes(panels, cfg, &topo),
        ModelKind::Dnn => run_dnn(panels, cfg, &topo),
        ModelKind::DtsSgd => run_dts(panels, cfg, &topo),
    }
}

/// Manifest block for one model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelManifest {
    pub model: String,
    pub member_seeds: Vec<u64>,
    pub selected_cells: Vec<GridCell>,
    pub mean_selected_l1: f64,
    pub mean_selected_eta: f64,
    pub grid: Vec<GridResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oes_intervals: Option<Vec<Vec<OesIntervalStat>>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dts_halts: Vec<(usize, usize)>,
}

/// The whole run record: enough to regenerate every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub crate_version: String,
    pub wall_clock_secs: f64,
    pub models: Vec<ModelManifest>,
    pub outputs: Vec<String>,
}

/// Outcome handed back to callers (the CLI prints a summary from it).
pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub metrics: Vec<(String, MetricsReport)>,
}

/// Runs every configured model, computes metrics, optionally combines the
/// first two models, and writes all artifacts under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let data = prepare_data(cfg)?;
    let panels = &data.panels;

    let mut outputs: Vec<String> = Vec::new();
    let mut model_manifests = Vec::new();
    let mut metrics_out = Vec::new();
    let mut prediction_sets: Vec<(ModelKind, PredictionSet)> = Vec::new();

    if let Some(psi) = &data.psi {
        let path = out_dir.join("psi_trajectory.csv");
        report::write_psi_csv(&path, psi)?;
        outputs.push("psi_trajectory.csv".into());
    }

    for &model in &cfg.models {
        let run = run_model(panels, cfg, model)?;
        let name = model.name();

        let pred_file = format!("predictions_{name}.csv");
        let model_col = if model == ModelKind::Oes { None } else { Some(name) };
        report::write_predictions_csv(&out_dir.join(&pred_file), &run.oos_predictions, model_col)?;
        outputs.push(pred_file);

        let metrics = compute_metrics(&run.oos_predictions)?;
        outputs.extend(report::write_metrics_files(out_dir, name, &metrics)?);
        outputs.extend(report::write_decile_cumulative_csv(
            out_dir,
            name,
            &run.oos_predictions,
        )?);
        outputs.extend(report::write_grid_csv(out_dir, name, &run.grid)?);

        if let Some(snapshots) = &run.snapshots {
            let topo = Topology::new(
                panels[0].num_features(),
                cfg.net.hidden.clone(),
                cfg.net.batch_norm,
            )?;
            let (intervals, fi) = feature_importance_matrix(&topo, snapshots, panels)?;
            let fi_file = format!("fi_heatmap_{name}.csv");
            report::write_fi_matrix_csv(&out_dir.join(&fi_file), &intervals, &fi)?;
            outputs.push(fi_file);
            let rolling_file = format!("fi_rolling12_{name}.csv");
            report::write_fi_rolling_csv(&out_dir.join(&rolling_file), &intervals, &fi)?;
            outputs.push(rolling_file);
            let yearly_file = format!("fi_yearly_{name}.csv");
            report::write_fi_yearly_csv(&out_dir.join(&yearly_file), &intervals, &fi)?;
            outputs.push(yearly_file);
        }

        let selected: Vec<GridCell> = run.grid.iter().map(|g| g.selected).collect();
        let mean_l1 = selected.iter().map(|c| c.l1).sum::<f64>() / selected.len() as f64;
        let mean_eta = selected.iter().map(|c| c.eta).sum::<f64>() / selected.len() as f64;
        model_manifests.push(ModelManifest {
            model: name.to_string(),
            member_seeds: run.member_seeds.clone(),
            selected_cells: selected,
            mean_selected_l1: mean_l1,
            mean_selected_eta: mean_eta,
            grid: run.grid.clone(),
            oes_intervals: run.oes_stats.clone(),
            dts_halts: run.dts_halts.clone(),
        });
        metrics_out.push((name.to_string(), metrics));
        prediction_sets.push((model, run.oos_predictions));
    }

    if let Some(mode) = cfg.combine {
        let (_, a) = &prediction_sets[0];
        let (_, b) = &prediction_sets[1];
        let combined = ensemble_combine(a, b, mode)?;
        report::write_predictions_csv(
            &out_dir.join("predictions_combined.csv"),
            &combined,
            Some("combined"),
        )?;
        outputs.push("predictions_combined.csv".into());
        let metrics = compute_metrics(&combined)?;
        outputs.extend(report::write_metrics_files(out_dir, "combined", &metrics)?);
        metrics_out.push(("combined".into(), metrics));
    }

    if prediction_sets.len() == 2 {
        let cmp = compare_models(&prediction_sets[0].1, &prediction_sets[1].1)?;
        outputs.extend(report::write_compare_csv(out_dir, &cmp)?);
    }

    let manifest = RunManifest {
        config: cfg.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        models: model_manifests,
        outputs,
    };
    report::write_manifest(out_dir, &manifest)?;
    Ok(ExperimentOutcome {
        manifest,
        metrics: metrics_out,
    })
}
