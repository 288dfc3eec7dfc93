//! `oes` command-line tool: synthetic data generation, walk-forward
//! backtests, grid search, feature importance and cross-run comparison.
//!
//! Configuration precedence: a JSON config file (`--config`) supplies the
//! base, individual flags override single fields. The output root defaults
//! to `OES_OUTPUT_ROOT` when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oes_core::eval::{compute_metrics, PredRecord, PredictionSet};
use oes_core::harness::{
    compare_models, prepare_data, report, run_experiment, DataSource, ExperimentConfig, ModelKind,
};
use oes_core::panel::{load_panel_csv, write_panel_csv, CsvSchema};
use oes_core::synthgen::{generate, generate_equities_shaped, SynthConfig};

#[derive(Parser)]
#[command(name = "oes", version, about = "Online early stopping for time-varying return prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Use the full synthetic-benchmark defaults as the base config.
    #[arg(long)]
    simulation: bool,

    /// Use the reduced smoke-profile defaults as the base config.
    #[arg(long)]
    smoke: bool,

    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Models to run (repeatable).
    #[arg(long = "model")]
    models: Vec<String>,

    /// Ensemble size.
    #[arg(long)]
    ensemble: Option<usize>,

    /// Panel CSV path (switches the data source to CSV).
    #[arg(long)]
    panel: Option<PathBuf>,

    /// Combine the two models' predictions: raw_mean or standardized_mean.
    #[arg(long = "ensemble-combine")]
    combine: Option<String>,

    /// Retain per-interval weights for feature importance.
    #[arg(long)]
    keep_snapshots: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, oes_core::Error> {
        let mut cfg = if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::from_json(&text)?
        } else if self.smoke {
            ExperimentConfig::smoke(self.seed.unwrap_or(0))
        } else if self.simulation {
            ExperimentConfig::simulation(self.seed.unwrap_or(0))
        } else {
            ExperimentConfig::default()
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            if let DataSource::Synthetic(s) = &mut cfg.data {
                s.seed = seed;
            }
        }
        if !self.models.is_empty() {
            cfg.models = self
                .models
                .iter()
                .map(|m| m.parse::<ModelKind>())
                .collect::<Result<Vec<_>, _>>()?;
        }
        if let Some(e) = self.ensemble {
            cfg.ensemble = e;
        }
        if let Some(p) = &self.panel {
            cfg.data = DataSource::Csv {
                path: p.display().to_string(),
                preprocess: None,
            };
        }
        if let Some(c) = &self.combine {
            cfg.combine = Some(c.parse()?);
        }
        if self.keep_snapshots {
            cfg.keep_snapshots = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic drifting panel and write it as CSV.
    Simulate {
        #[arg(long, default_value_t = 180)]
        intervals: usize,
        #[arg(long, default_value_t = 200)]
        entities: usize,
        #[arg(long, default_value_t = 100)]
        features: usize,
        #[arg(long, default_value_t = 0.95)]
        persistence: f64,
        #[arg(long, default_value_t = 0.05)]
        innovation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also attach market caps and exchange/sector group columns.
        #[arg(long)]
        equities_shaped: bool,
        /// Output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the walk-forward experiment (grid search + out-of-sample run).
    Backtest {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the grid search only and write the score table.
    Grid {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Replay an online run and emit the feature-importance matrix.
    Importance {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compute the metric suite from a stored prediction CSV and its panel.
    Report {
        /// Prediction CSV (t, entity_id, prediction[, model]).
        #[arg(long)]
        predictions: PathBuf,
        /// Panel CSV with realized returns.
        #[arg(long)]
        panel: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Correlate the predictions of two finished runs.
    Compare {
        /// First run directory (uses predictions_<model>.csv inside).
        #[arg(long)]
        run_a: PathBuf,
        /// Second run directory.
        #[arg(long)]
        run_b: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn output_dir(explicit: Option<PathBuf>, leaf: &str) -> PathBuf {
    match explicit {
        Some(p) => p,
        None => {
            let root = std::env::var("OES_OUTPUT_ROOT").unwrap_or_else(|_| "runs".into());
            Path::new(&root).join(leaf)
        }
    }
}

fn find_predictions_csv(dir: &Path) -> Result<PathBuf, oes_core::Error> {
    let mut candidates: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("predictions_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    candidates.sort();
    candidates.into_iter().next().ok_or_else(|| {
        oes_core::Error::Panel(format!("no predictions_*.csv in {}", dir.display()))
    })
}

fn load_prediction_set(path: &Path, panel: &[oes_core::panel::PanelSlice]) -> Result<PredictionSet, oes_core::Error> {
    let rows = report::read_predictions_csv(path)?;
    let mut records = Vec::with_capacity(rows.len());
    for (t, entity_id, predicted) in rows {
        let slice = panel
            .iter()
            .find(|s| s.t == t)
            .ok_or_else(|| oes_core::Error::Panel(format!("panel has no interval {t}")))?;
        let idx = slice
            .entity_ids
            .iter()
            .position(|id| *id == entity_id)
            .ok_or_else(|| {
                oes_core::Error::Panel(format!("entity {entity_id} missing at interval {t}"))
            })?;
        records.push(PredRecord {
            t,
            entity_id,
            predicted,
            realized: slice.r[idx],
        });
    }
    PredictionSet::from_records(records)
}

fn run() -> Result<(), oes_core::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            intervals,
            entities,
            features,
            persistence,
            innovation,
            noise_std,
            seed,
            equities_shaped,
            out,
        } => {
            let dir = output_dir(out, "simulate");
            std::fs::create_dir_all(&dir)?;
            let cfg = SynthConfig {
                intervals,
                entities,
                features,
                persistence,
                innovation,
                noise_std,
                seed,
            };
            let schema = CsvSchema::default();
            if equities_shaped {
                let slices = generate_equities_shaped(&cfg)?;
                write_panel_csv(&slices, &schema, dir.join("panel.csv"))?;
            } else {
                let panel = generate(&cfg)?;
                write_panel_csv(&panel.slices, &schema, dir.join("panel.csv"))?;
                report::write_psi_csv(&dir.join("psi_trajectory.csv"), &panel.psi)?;
            }
            println!("wrote {}", dir.join("panel.csv").display());
            Ok(())
        }
        Command::Backtest { cfg, out } => {
            let cfg = cfg.resolve()?;
            let dir = output_dir(out, "backtest");
            let outcome = run_experiment(&cfg, &dir)?;
            for (name, m) in &outcome.metrics {
                println!(
                    "{name}: pooled_r2_oos {:.4}  mean_r2 {:.4}  ic {:.4}  sharpe {:.3}",
                    m.pooled_r2_oos, m.mean_monthly_r2, m.ic_mean, m.decile.sharpe
                );
            }
            println!("artifacts in {}", dir.display());
            Ok(())
        }
        Command::Grid { cfg, out } => {
            let cfg = cfg.resolve()?;
            let dir = output_dir(out, "grid");
            std::fs::create_dir_all(&dir)?;
            let data = prepare_data(&cfg)?;
            for &model in &cfg.models {
                let run = oes_core::harness::run_model(&data.panels, &cfg, model)?;
                report::write_grid_csv(&dir, model.name(), &run.grid)?;
                for (m, g) in run.grid.iter().enumerate() {
                    println!(
                        "{} member {m}: selected {} (score {:.6})",
                        model.name(),
                        g.selected,
                        g.selected_score
                    );
                }
            }
            println!("grid tables in {}", dir.display());
            Ok(())
        }
        Command::Importance { cfg, out } => {
            let mut cfg = cfg.resolve()?;
            cfg.keep_snapshots = true;
            if !cfg.models.contains(&ModelKind::Oes) {
                cfg.models = vec![ModelKind::Oes];
            }
            let dir = output_dir(out, "importance");
            let outcome = run_experiment(&cfg, &dir)?;
            let has_fi = outcome
                .manifest
                .outputs
                .iter()
                .any(|o| o.starts_with("fi_heatmap"));
            if !has_fi {
                return Err(oes_core::Error::InvalidConfig(
                    "feature importance produced no heatmap".into(),
                ));
            }
            println!("importance artifacts in {}", dir.display());
            Ok(())
        }
        Command::Report {
            predictions,
            panel,
            out,
        } => {
            let dir = output_dir(out, "report");
            std::fs::create_dir_all(&dir)?;
            let slices = load_panel_csv(&panel, &CsvSchema::default())?;
            let set = load_prediction_set(&predictions, &slices)?;
            let metrics = compute_metrics(&set)?;
            report::write_metrics_files(&dir, "report", &metrics)?;
            println!(
                "pooled_r2_oos {:.4}  mean_r2 {:.4}  ic {:.4}  sharpe {:.3}",
                metrics.pooled_r2_oos, metrics.mean_monthly_r2, metrics.ic_mean, metrics.decile.sharpe
            );
            println!("report in {}", dir.display());
            Ok(())
        }
        Command::Compare { run_a, run_b, out } => {
            let dir = output_dir(out, "compare");
            std::fs::create_dir_all(&dir)?;
            let pa = report::read_predictions_csv(&find_predictions_csv(&run_a)?)?;
            let pb = report::read_predictions_csv(&find_predictions_csv(&run_b)?)?;
            let to_set = |rows: Vec<(usize, String, f64)>| {
                PredictionSet::from_records(
                    rows.into_iter()
                        .map(|(t, entity_id, predicted)| PredRecord {
                            t,
                            entity_id,
                            predicted,
                            realized: 0.0,
                        })
                        .collect(),
                )
            };
            let cmp = compare_models(&to_set(pa)?, &to_set(pb)?)?;
            report::write_compare_csv(&dir, &cmp)?;
            println!("mean correlation {:.4}; series in {}", cmp.mean, dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
