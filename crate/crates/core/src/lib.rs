//! Online early stopping (OES) for feedforward networks tracking a
//! time-varying regression function.
//!
//! The crate is organized around a per-interval training loop: at each
//! interval the optimal number of gradient steps is re-estimated by early
//! stopping against the next interval, and the running mean of those step
//! counts regularizes how far the prediction weights may travel. Two
//! baselines (an expanding-window pooled network and time-smoothed SGD),
//! a synthetic drift benchmark, cross-sectional panel preprocessing and a
//! portfolio-oriented evaluation suite round out the toolkit.

pub mod baselines;
pub mod earlystop;
pub mod error;
pub mod eval;
pub mod harness;
pub mod nn;
pub mod oes;
pub mod panel;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
