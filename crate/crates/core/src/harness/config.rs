//! Experiment configuration: one JSON document drives data generation or
//! loading, split ranges, the hyperparameter grid and training knobs. CLI
//! flags override individual fields; the file is the base layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::CombineMode;
use crate::panel::PreprocessConfig;
use crate::synthgen::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Oes,
    Dnn,
    DtsSgd,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Oes => "oes",
            ModelKind::Dnn => "dnn",
            ModelKind::DtsSgd => "dts_sgd",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oes" => Ok(Self::Oes),
            "dnn" => Ok(Self::Dnn),
            "dts_sgd" | "dts-sgd" | "dts" => Ok(Self::DtsSgd),
            other => Err(Error::InvalidConfig(format!(
                "unknown model {other:?} (expected oes, dnn or dts_sgd)"
            ))),
        }
    }
}

/// Where the panel comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthConfig),
    Csv {
        path: String,
        #[serde(default)]
        preprocess: Option<PreprocessConfig>,
    },
}

/// Chronological split by sequence position: training `[0, train_end)`,
/// validation `[train_end, val_end)`, out-of-sample the rest.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_end: usize,
    pub val_end: usize,
}

/// Hyperparameter grid. The OES/DNN grid is `l1 x eta`; DTS-SGD adds
/// `window x forget`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub l1: Vec<f64>,
    pub eta: Vec<f64>,
    pub dts_window: Vec<usize>,
    pub dts_forget: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            l1: vec![1e-5, 1e-4, 1e-3],
            eta: vec![0.001, 0.01],
            dts_window: vec![5, 10, 20],
            dts_forget: vec![0.9, 0.8, 0.7],
        }
    }
}

/// Early-stopping knobs shared by every trainer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub patience: usize,
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            patience: 5,
            tolerance: 1e-3,
        }
    }
}

/// Per-model mini-batch sizes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BatchSizes {
    pub oes: usize,
    pub dnn: usize,
}

impl Default for BatchSizes {
    fn default() -> Self {
        Self {
            oes: 1_000,
            dnn: 10_000,
        }
    }
}

/// Network shape knobs (input width comes from the data).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 16, 8],
            batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub config_version: u32,
    pub models: Vec<ModelKind>,
    pub data: DataSource,
    pub split: SplitConfig,
    pub grid: GridConfig,
    pub net: NetConfig,
    pub fit: FitConfig,
    pub batch: BatchSizes,
    pub ensemble: usize,
    pub seed: u64,
    /// Expanding-window refit period (intervals).
    pub refit_every: usize,
    /// Train window keeps its start pinned when true, rolls otherwise.
    pub expanding: bool,
    /// Re-run the grid at every expanding-window refit instead of once.
    pub retune_each_refit: bool,
    /// Combine the first two models' predictions when set.
    pub combine: Option<CombineMode>,
    /// Retain per-interval prediction weights for feature importance.
    pub keep_snapshots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            config_version: 1,
            models: vec![ModelKind::Oes],
            data: DataSource::Synthetic(SynthConfig::default()),
            split: SplitConfig {
                train_end: 60,
                val_end: 120,
            },
            grid: GridConfig::default(),
            net: NetConfig::default(),
            fit: FitConfig::default(),
            batch: BatchSizes::default(),
            ensemble: 10,
            seed: 0,
            refit_every: 10,
            expanding: true,
            retune_each_refit: false,
            combine: None,
            keep_snapshots: false,
        }
    }
}

impl ExperimentConfig {
    /// The synthetic-benchmark protocol: 180 intervals in three 60-interval
    /// blocks, batch size 50, refits every 10 intervals.
    pub fn simulation(seed: u64) -> Self {
        Self {
            data: DataSource::Synthetic(SynthConfig {
                seed,
                ..SynthConfig::default()
            }),
            batch: BatchSizes { oes: 50, dnn: 50 },
            seed,
            ..Self::default()
        }
    }

    /// Reduced profile that finishes in a couple of minutes.
    pub fn smoke(seed: u64) -> Self {
        Self {
            data: DataSource::Synthetic(SynthConfig::smoke(seed)),
            split: SplitConfig {
                train_end: 20,
                val_end: 40,
            },
            batch: BatchSizes { oes: 50, dnn: 50 },
            ensemble: 2,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.config_version != 1 {
            return Err(Error::InvalidConfig(format!(
                "unsupported config_version {}",
                self.config_version
            )));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("no models requested".into()));
        }
        if self.split.train_end == 0 || self.split.train_end >= self.split.val_end {
            return Err(Error::InvalidConfig(format!(
                "split must satisfy 0 < train_end < val_end, got {} / {}",
                self.split.train_end, self.split.val_end
            )));
        }
        if self.grid.l1.is_empty() || self.grid.eta.is_empty() {
            return Err(Error::InvalidConfig("grid must be non-empty".into()));
        }
        if self.models.contains(&ModelKind::DtsSgd)
            && (self.grid.dts_window.is_empty() || self.grid.dts_forget.is_empty())
        {
            return Err(Error::InvalidConfig("DTS grid must be non-empty".into()));
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidConfig("ensemble must be >= 1".into()));
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidConfig("refit_every must be >= 1".into()));
        }
        if self.combine.is_some() && self.models.len() != 2 {
            return Err(Error::InvalidConfig(
                "prediction combination needs exactly two models".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
