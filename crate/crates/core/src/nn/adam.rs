use super::{Gradients, Topology, WeightSet};
use crate::error::{Error, Result};

/// ADAM state: first/second moment accumulators shaped like the gradient,
/// plus the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
    pub fn new(topo: &Topology) -> Self {
        Self {
            m: Gradients::zeros(topo),
            v: Gradients::zeros(topo),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One ADAM update with bias correction:
    /// m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
    /// p <- p - lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, weights: &mut WeightSet, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::InvalidConfig("step size must be positive".into()));
        }
        if !grads.all_finite() {
            return Err(Error::Diverged("non-finite gradient passed to ADAM".into()));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for l in 0..weights.dense.len() {
            let pw = weights.dense[l].w.as_slice_mut().expect("contiguous");
            let gw = grads.dense[l].w.as_slice().expect("contiguous");
            let mw = self.m.dense[l].w.as_slice_mut().expect("contiguous");
            let vw = self.v.dense[l].w.as_slice_mut().expect("contiguous");
            for i in 0..pw.len() {
                apply(&mut pw[i], gw[i], &mut mw[i], &mut vw[i]);
            }
            let pb = weights.dense[l].b.as_slice_mut().expect("contiguous");
            let gb = grads.dense[l].b.as_slice().expect("contiguous");
            let mb = self.m.dense[l].b.as_slice_mut().expect("contiguous");
            let vb = self.v.dense[l].b.as_slice_mut().expect("contiguous");
            for i in 0..pb.len() {
                apply(&mut pb[i], gb[i], &mut mb[i], &mut vb[i]);
            }
        }
        for l in 0..weights.bnorm.len() {
            let pg = weights.bnorm[l].gamma.as_slice_mut().expect("contiguous");
            let gg = grads.bnorm[l].gamma.as_slice().expect("contiguous");
            let mg = self.m.bnorm[l].gamma.as_slice_mut().expect("contiguous");
            let vg = self.v.bnorm[l].gamma.as_slice_mut().expect("contiguous");
            for i in 0..pg.len() {
                apply(&mut pg[i], gg[i], &mut mg[i], &mut vg[i]);
            }
            let pb = weights.bnorm[l].beta.as_slice_mut().expect("contiguous");
            let gb = grads.bnorm[l].beta.as_slice().expect("contiguous");
            let mb = self.m.bnorm[l].beta.as_slice_mut().expect("contiguous");
            let vb = self.v.bnorm[l].beta.as_slice_mut().expect("contiguous");
            for i in 0..pb.len() {
                apply(&mut pb[i], gb[i], &mut mb[i], &mut vb[i]);
            }
        }
        Ok(())
    }
}
