//! From-scratch feedforward network: dense layers with optional batch
//! normalization on hidden pre-activations, ReLU hidden activations and a
//! linear scalar output. Sized for small cross-sectional regressions
//! (default 32-16-8) but generic in dimensions.

mod adam;
mod checkpoint;
mod forward;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use forward::{forward_eval, forward_train, loss_and_gradient, validation_mse};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Exponential moving average momentum for batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.9;
/// Stabilizing epsilon inside the batch-norm denominator.
pub const BN_EPS: f64 = 1e-5;

/// Network shape. Hidden activation is ReLU, output is a linear scalar.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Topology {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub batch_norm: bool,
}

impl Topology {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, batch_norm: bool) -> Result<Self> {
        let t = Self {
            input_dim,
            hidden_sizes,
            batch_norm,
        };
        t.validate()?;
        Ok(t)
    }

    /// The 32-16-8 default with batch norm.
    pub fn default_arch(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, vec![32, 16, 8], true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be positive".into()));
        }
        if self.hidden_sizes.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig(
                "hidden sizes must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// (fan_in, fan_out) for every dense layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_sizes.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_sizes {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, 1));
        dims
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        for (fi, fo) in self.layer_dims() {
            n += fi * fo + fo;
        }
        if self.batch_norm {
            n += 2 * self.hidden_sizes.iter().sum::<usize>();
        }
        n
    }
}

/// One dense layer: weights shaped (fan_in, fan_out) plus a bias per output.
/// Also reused as gradient storage since the shapes coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }
}

/// Batch-norm parameters and running statistics for one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

/// All trainable parameters plus batch-norm running state.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub dense: Vec<Dense>,
    pub bnorm: Vec<BatchNorm>,
    /// Set once a train-mode forward has populated the running statistics.
    pub stats_ready: bool,
}

impl WeightSet {
    /// All-zero parameters (identity batch norm). Mostly useful in tests.
    pub fn zeros(topo: &Topology) -> Self {
        let dense = topo
            .layer_dims()
            .into_iter()
            .map(|(fi, fo)| Dense::zeros(fi, fo))
            .collect();
        let bnorm = if topo.batch_norm {
            topo.hidden_sizes
                .iter()
                .map(|&h| BatchNorm::identity(h))
                .collect()
        } else {
            Vec::new()
        };
        Self {
            dense,
            bnorm,
            stats_ready: false,
        }
    }

    /// Glorot-uniform initialization: each weight drawn row-major from
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero,
    /// gamma one, beta zero.
    pub fn init(topo: &Topology, stream: &mut SeedStream) -> Self {
        let mut ws = Self::zeros(topo);
        for layer in &mut ws.dense {
            let (fi, fo) = (layer.w.nrows(), layer.w.ncols());
            let s = (6.0 / (fi + fo) as f64).sqrt();
            for v in layer.w.iter_mut() {
                *v = stream.uniform_in(-s, s);
            }
        }
        ws
    }

    pub fn shape_matches(&self, topo: &Topology) -> bool {
        let dims = topo.layer_dims();
        self.dense.len() == dims.len()
            && self
                .dense
                .iter()
                .zip(&dims)
                .all(|(d, &(fi, fo))| d.w.dim() == (fi, fo) && d.b.len() == fo)
            && if topo.batch_norm {
                self.bnorm.len() == topo.hidden_sizes.len()
                    && self
                        .bnorm
                        .iter()
                        .zip(&topo.hidden_sizes)
                        .all(|(bn, &h)| bn.gamma.len() == h)
            } else {
                self.bnorm.is_empty()
            }
    }

    pub fn all_finite(&self) -> bool {
        self.dense
            .iter()
            .all(|d| d.w.iter().all(|v| v.is_finite()) && d.b.iter().all(|v| v.is_finite()))
            && self.bnorm.iter().all(|bn| {
                bn.gamma.iter().all(|v| v.is_finite())
                    && bn.beta.iter().all(|v| v.is_finite())
                    && bn.running_mean.iter().all(|v| v.is_finite())
                    && bn.running_var.iter().all(|v| v.is_finite() && *v >= 0.0)
            })
    }

    /// `params += coeff * delta`, leaving running statistics untouched.
    pub fn apply_delta(&mut self, delta: &Gradients, coeff: f64) {
        for (d, g) in self.dense.iter_mut().zip(&delta.dense) {
            d.w.zip_mut_with(&g.w, |x, &y| *x += coeff * y);
            d.b.zip_mut_with(&g.b, |x, &y| *x += coeff * y);
        }
        for (bn, g) in self.bnorm.iter_mut().zip(&delta.bnorm) {
            bn.gamma.zip_mut_with(&g.gamma, |x, &y| *x += coeff * y);
            bn.beta.zip_mut_with(&g.beta, |x, &y| *x += coeff * y);
        }
    }

    /// Sum of |w| over weight matrices only (no biases, no batch-norm params).
    pub fn l1_weight_norm(&self) -> f64 {
        self.dense
            .iter()
            .map(|d| d.w.iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }
}

/// Gradient of the loss with respect to every trainable parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dense: Vec<Dense>,
    pub bnorm: Vec<BnGrad>,
}

/// Gradient slots for one batch-norm layer (running stats carry no gradient).
#[derive(Debug, Clone)]
pub struct BnGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl Gradients {
    pub fn zeros(topo: &Topology) -> Self {
        let dense = topo
            .layer_dims()
            .into_iter()
            .map(|(fi, fo)| Dense::zeros(fi, fo))
            .collect();
        let bnorm = if topo.batch_norm {
            topo.hidden_sizes
                .iter()
                .map(|&h| BnGrad {
                    gamma: Array1::zeros(h),
                    beta: Array1::zeros(h),
                })
                .collect()
        } else {
            Vec::new()
        };
        Self { dense, bnorm }
    }

    pub fn all_finite(&self) -> bool {
        self.dense
            .iter()
            .all(|d| d.w.iter().all(|v| v.is_finite()) && d.b.iter().all(|v| v.is_finite()))
            && self
                .bnorm
                .iter()
                .all(|g| g.gamma.iter().all(|v| v.is_finite()) && g.beta.iter().all(|v| v.is_finite()))
    }

    /// `self *= coeff`, coordinate-wise.
    pub fn scale(&mut self, coeff: f64) {
        for d in &mut self.dense {
            d.w.mapv_inplace(|v| v * coeff);
            d.b.mapv_inplace(|v| v * coeff);
        }
        for g in &mut self.bnorm {
            g.gamma.mapv_inplace(|v| v * coeff);
            g.beta.mapv_inplace(|v| v * coeff);
        }
    }

    /// `self += coeff * other`, coordinate-wise.
    pub fn accumulate_scaled(&mut self, other: &Gradients, coeff: f64) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            a.w.zip_mut_with(&b.w, |x, &y| *x += coeff * y);
            a.b.zip_mut_with(&b.b, |x, &y| *x += coeff * y);
        }
        for (a, b) in self.bnorm.iter_mut().zip(&other.bnorm) {
            a.gamma.zip_mut_with(&b.gamma, |x, &y| *x += coeff * y);
            a.beta.zip_mut_with(&b.beta, |x, &y| *x += coeff * y);
        }
    }

    /// Euclidean norm over all coordinates.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for d in &self.dense {
            s += d.w.iter().map(|v| v * v).sum::<f64>();
            s += d.b.iter().map(|v| v * v).sum::<f64>();
        }
        for g in &self.bnorm {
            s += g.gamma.iter().map(|v| v * v).sum::<f64>();
            s += g.beta.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }
}

/// Loss configuration: mean squared error plus an L1 penalty on weight
/// matrices (biases and batch-norm parameters are not penalized).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub l1_penalty: f64,
}

impl LossConfig {
    pub fn new(l1_penalty: f64) -> Result<Self> {
        if !(l1_penalty >= 0.0) {
            return Err(Error::InvalidConfig("l1_penalty must be >= 0".into()));
        }
        Ok(Self { l1_penalty })
    }

    pub fn mse_only() -> Self {
        Self { l1_penalty: 0.0 }
    }
}
