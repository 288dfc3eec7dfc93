use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{Gradients, LossConfig, Topology, WeightSet, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};

/// Per-layer values captured during a train-mode forward pass.
pub(crate) struct ForwardCache {
    /// Input to each dense layer (activations of the previous layer).
    inputs: Vec<Array2<f64>>,
    /// Normalized pre-activations x_hat, one per batch-norm layer.
    xhat: Vec<Array2<f64>>,
    /// 1/sqrt(var + eps), one per batch-norm layer.
    pub(crate) inv_std: Vec<Array1<f64>>,
    /// Post-batch-norm (pre-ReLU) values, one per hidden layer.
    pub(crate) pre_act: Vec<Array2<f64>>,
    /// Final predictions.
    pub(crate) output: Array1<f64>,
}

fn check_input(topo: &Topology, weights: &WeightSet, x: &ArrayView2<f64>) -> Result<()> {
    if !weights.shape_matches(topo) {
        return Err(Error::DimensionMismatch(
            "weight set does not match topology".into(),
        ));
    }
    if x.ncols() != topo.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input has {} columns, topology expects {}",
            x.ncols(),
            topo.input_dim
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyBatch("forward pass on zero rows".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input matrix".into()));
    }
    Ok(())
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Eval-mode forward pass: batch norm uses running statistics and nothing is
/// mutated. Two calls on identical inputs return identical outputs.
pub fn forward_eval(
    topo: &Topology,
    weights: &WeightSet,
    x: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    check_input(topo, weights, &x)?;
    if topo.batch_norm && !weights.stats_ready {
        return Err(Error::InvalidConfig(
            "eval-mode forward with uninitialized batch-norm running statistics".into(),
        ));
    }
    let n_hidden = topo.hidden_sizes.len();
    let mut a = x.to_owned();
    for l in 0..n_hidden {
        let mut z = a.dot(&weights.dense[l].w) + &weights.dense[l].b;
        if topo.batch_norm {
            let bn = &weights.bnorm[l];
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            z = (z - &bn.running_mean) * &inv_std * &bn.gamma + &bn.beta;
        }
        relu_inplace(&mut z);
        a = z;
    }
    let last = weights.dense.len() - 1;
    let out = a.dot(&weights.dense[last].w) + &weights.dense[last].b;
    let out = out.index_axis(Axis(1), 0).to_owned();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eval-mode prediction".into()));
    }
    Ok(out)
}

/// Train-mode forward pass: batch norm normalizes with the batch mean and
/// biased (1/n) batch variance, and folds them into the running statistics
/// with momentum [`BN_MOMENTUM`].
pub(crate) fn forward_train_cached(
    topo: &Topology,
    weights: &mut WeightSet,
    x: ArrayView2<f64>,
) -> Result<ForwardCache> {
    check_input(topo, weights, &x)?;
    let n_hidden = topo.hidden_sizes.len();

    let mut inputs = Vec::with_capacity(n_hidden + 1);
    let mut xhat = Vec::new();
    let mut inv_std = Vec::new();
    let mut pre_act = Vec::with_capacity(n_hidden);

    let mut a = x.to_owned();
    for l in 0..n_hidden {
        let mut z = a.dot(&weights.dense[l].w) + &weights.dense[l].b;
        inputs.push(a);
        if topo.batch_norm {
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let centered = z - &mean;
            let var = centered
                .mapv(|v| v * v)
                .mean_axis(Axis(0))
                .expect("non-empty batch");
            let istd = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xh = centered * &istd;
            let bn = &mut weights.bnorm[l];
            z = &xh * &bn.gamma + &bn.beta;
            bn.running_mean = &bn.running_mean * BN_MOMENTUM + &(mean * (1.0 - BN_MOMENTUM));
            bn.running_var = &bn.running_var * BN_MOMENTUM + &(var * (1.0 - BN_MOMENTUM));
            xhat.push(xh);
            inv_std.push(istd);
        }
        pre_act.push(z.clone());
        relu_inplace(&mut z);
        a = z;
    }
    if topo.batch_norm {
        weights.stats_ready = true;
    }
    let last = weights.dense.len() - 1;
    let out = a.dot(&weights.dense[last].w) + &weights.dense[last].b;
    inputs.push(a);
    let output = out.index_axis(Axis(1), 0).to_owned();
    Ok(ForwardCache {
        inputs,
        xhat,
        inv_std,
        pre_act,
        output,
    })
}

/// Train-mode forward returning only the predictions.
pub fn forward_train(
    topo: &Topology,
    weights: &mut WeightSet,
    x: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    Ok(forward_train_cached(topo, weights, x)?.output)
}

/// Mean squared error of eval-mode predictions against `r` (no L1 term).
pub fn validation_mse(
    topo: &Topology,
    weights: &WeightSet,
    x: ArrayView2<f64>,
    r: ArrayView1<f64>,
) -> Result<f64> {
    let preds = forward_eval(topo, weights, x)?;
    if preds.len() != r.len() {
        return Err(Error::DimensionMismatch("targets vs predictions".into()));
    }
    let n = r.len() as f64;
    Ok(preds
        .iter()
        .zip(r.iter())
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / n)
}

/// Training loss and its full backpropagated gradient.
///
/// loss = (1/n) sum (r_i - F_i)^2 + l1 * sum |W| over weight matrices.
/// The L1 subgradient at exactly zero is taken as zero; biases and
/// batch-norm parameters are not penalized. Runs the forward pass in train
/// mode, so batch-norm running statistics are updated.
pub fn loss_and_gradient(
    topo: &Topology,
    weights: &mut WeightSet,
    x: ArrayView2<f64>,
    r: ArrayView1<f64>,
    cfg: &LossConfig,
) -> Result<(f64, Gradients)> {
    if x.nrows() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} targets",
            x.nrows(),
            r.len()
        )));
    }
    let cache = forward_train_cached(topo, weights, x)?;
    let n = r.len() as f64;

    let resid = &cache.output - &r;
    let mse = resid.iter().map(|v| v * v).sum::<f64>() / n;
    let loss = mse + cfg.l1_penalty * weights.l1_weight_norm();
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite training loss {loss}")));
    }

    let mut grads = Gradients::zeros(topo);
    let n_hidden = topo.hidden_sizes.len();
    let last = weights.dense.len() - 1;

    // Output layer; d_out has shape (n, 1). Gradient matrices are written
    // in place so they stay in standard layout.
    let d_out = resid.mapv(|v| 2.0 * v / n).insert_axis(Axis(1));
    general_mat_mul(
        1.0,
        &cache.inputs[n_hidden].t(),
        &d_out,
        0.0,
        &mut grads.dense[last].w,
    );
    grads.dense[last].b = d_out.sum_axis(Axis(0));
    let mut d_act = d_out.dot(&weights.dense[last].w.t());

    for l in (0..n_hidden).rev() {
        // Through ReLU (subgradient 0 at the kink).
        let mut d_pre = d_act;
        d_pre.zip_mut_with(&cache.pre_act[l], |g, &y| {
            if y <= 0.0 {
                *g = 0.0;
            }
        });
        // Through batch norm (biased-variance formulation).
        let d_z = if topo.batch_norm {
            let bn = &weights.bnorm[l];
            let xh = &cache.xhat[l];
            grads.bnorm[l].gamma = (&d_pre * xh).sum_axis(Axis(0));
            grads.bnorm[l].beta = d_pre.sum_axis(Axis(0));
            let d_xhat = d_pre * &bn.gamma;
            let mean_dxhat = d_xhat.mean_axis(Axis(0)).expect("non-empty batch");
            let mean_dxhat_xhat = (&d_xhat * xh).mean_axis(Axis(0)).expect("non-empty batch");
            (d_xhat - &mean_dxhat - xh * &mean_dxhat_xhat) * &cache.inv_std[l]
        } else {
            d_pre
        };
        general_mat_mul(1.0, &cache.inputs[l].t(), &d_z, 0.0, &mut grads.dense[l].w);
        grads.dense[l].b = d_z.sum_axis(Axis(0));
        d_act = d_z.dot(&weights.dense[l].w.t());
    }

    if cfg.l1_penalty > 0.0 {
        for (g, d) in grads.dense.iter_mut().zip(&weights.dense) {
            g.w.zip_mut_with(&d.w, |gv, &wv| {
                if wv != 0.0 {
                    *gv += cfg.l1_penalty * wv.signum();
                }
            });
        }
    }

    if !grads.all_finite() {
        return Err(Error::Diverged("non-finite gradient".into()));
    }
    Ok((loss, grads))
}
