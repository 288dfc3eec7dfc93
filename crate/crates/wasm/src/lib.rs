//! Browser demo bindings: three interactive views over the core library,
//! each returning a JSON payload for the page to chart.
//!
//! Kept deliberately small (single chains, no ensembles) so every slider
//! change recomputes in well under a second inside the browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use oes_core::earlystop::{early_stopping, StopConfig};
use oes_core::eval::{information_coefficient, PredictionSet};
use oes_core::nn::{LossConfig, Topology, WeightSet};
use oes_core::oes::oes_chain;
use oes_core::rng::SeedStream;
use oes_core::synthgen::{generate, SynthConfig};

fn err_json(msg: &str) -> String {
    format!("{{\"error\":{}}}", serde_json::to_string(msg).unwrap())
}

fn synth(seed: u64, intervals: usize, entities: usize, features: usize, innovation: f64) -> SynthConfig {
    SynthConfig {
        intervals,
        entities,
        features,
        innovation,
        seed,
        ..SynthConfig::default()
    }
}

#[derive(Serialize)]
struct DriftView {
    /// psi[t][j]: latent factor trajectories.
    psi: Vec<Vec<f64>>,
    /// Cross-sectional target dispersion per interval.
    target_std: Vec<f64>,
}

/// Latent factor trajectories of the synthetic benchmark.
#[wasm_bindgen]
pub fn drift_panel(
    seed: u64,
    intervals: usize,
    features: usize,
    persistence: f64,
    innovation: f64,
) -> String {
    let cfg = SynthConfig {
        intervals: intervals.clamp(2, 360),
        entities: 40,
        features: features.clamp(1, 40),
        persistence,
        innovation,
        ..SynthConfig::default()
    };
    let cfg = SynthConfig { seed, ..cfg };
    let panel = match generate(&cfg) {
        Ok(p) => p,
        Err(e) => return err_json(&e.to_string()),
    };
    let psi: Vec<Vec<f64>> = panel
        .psi
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let target_std = panel
        .slices
        .iter()
        .map(|s| {
            let n = s.r.len() as f64;
            let mean = s.r.sum() / n;
            (s.r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();
    serde_json::to_string(&DriftView { psi, target_std }).unwrap_or_else(|e| err_json(&e.to_string()))
}

#[derive(Serialize)]
struct OnlineView {
    t: Vec<usize>,
    ic_online: Vec<f64>,
    ic_frozen: Vec<f64>,
    tau_prime: Vec<usize>,
    passes: Vec<usize>,
    tau_mean: Vec<f64>,
    mean_ic_online: f64,
    mean_ic_frozen: f64,
}

/// One online chain against a frozen-weights baseline on a drifting panel.
#[wasm_bindgen]
pub fn online_run(
    seed: u64,
    intervals: usize,
    entities: usize,
    features: usize,
    eta: f64,
    l1: f64,
    innovation: f64,
) -> String {
    let cfg = synth(
        seed,
        intervals.clamp(5, 150),
        entities.clamp(12, 150),
        features.clamp(2, 30),
        innovation,
    );
    let panel = match generate(&cfg) {
        Ok(p) => p.slices,
        Err(e) => return err_json(&e.to_string()),
    };
    let topo = match Topology::new(cfg.features, vec![8, 4], true) {
        Ok(t) => t,
        Err(e) => return err_json(&e.to_string()),
    };
    let stop = StopConfig {
        max_iterations: 60,
        tolerance: 1e-3,
        patience: 5,
        step_size: eta.clamp(1e-5, 0.5),
        batch_size: 25,
    };
    let loss = match LossConfig::new(l1.max(0.0)) {
        Ok(l) => l,
        Err(e) => return err_json(&e.to_string()),
    };

    let chain = match oes_chain(&topo, &panel, &stop, &loss, seed, false) {
        Ok(c) => c,
        Err(e) => return err_json(&e.to_string()),
    };

    // Frozen baseline: early-stop once on the first interval pair, then
    // predict the rest without ever updating.
    let mut stream = SeedStream::new(seed ^ 0x5eed);
    let theta0 = WeightSet::init(&topo, &mut stream);
    let frozen = match early_stopping(
        &topo,
        &theta0,
        panel[0].x.view(),
        panel[0].r.view(),
        panel[1].x.view(),
        panel[1].r.view(),
        &stop,
        &loss,
        &mut stream,
        None,
    ) {
        Ok(es) => es.weights_best,
        Err(e) => return err_json(&e.to_string()),
    };

    let ic_for = |preds: Vec<(usize, ndarray::Array1<f64>)>| -> Result<Vec<(usize, f64)>, String> {
        let set = PredictionSet::from_interval_predictions(&panel, &preds)
            .map_err(|e| e.to_string())?;
        let ic = information_coefficient(&set, false).map_err(|e| e.to_string())?;
        Ok(ic.per_interval)
    };

    let mut frozen_preds = Vec::new();
    for s in &panel[2..] {
        match oes_core::nn::forward_eval(&topo, &frozen, s.x.view()) {
            Ok(p) => frozen_preds.push((s.t, p)),
            Err(e) => return err_json(&e.to_string()),
        }
    }
    let (online_ic, frozen_ic) = match (ic_for(chain.predictions), ic_for(frozen_preds)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return err_json(&e),
    };

    let view = OnlineView {
        t: online_ic.iter().map(|(t, _)| *t).collect(),
        mean_ic_online: online_ic.iter().map(|(_, v)| v).sum::<f64>() / online_ic.len() as f64,
        mean_ic_frozen: frozen_ic.iter().map(|(_, v)| v).sum::<f64>() / frozen_ic.len() as f64,
        ic_online: online_ic.iter().map(|(_, v)| *v).collect(),
        ic_frozen: frozen_ic.iter().map(|(_, v)| *v).collect(),
        tau_prime: chain.reports.iter().map(|r| r.tau_prime).collect(),
        passes: chain.reports.iter().map(|r| r.passes_used).collect(),
        tau_mean: chain.reports.iter().map(|r| r.tau_mean).collect(),
    };
    serde_json::to_string(&view).unwrap_or_else(|e| err_json(&e.to_string()))
}

#[derive(Serialize)]
struct TraceView {
    k: Vec<usize>,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    tau_best: usize,
    stopped_at: usize,
}

/// One early-stopping run: train on interval 0, validate on interval
/// `gap`, so the gap widens the train/validation drift.
#[wasm_bindgen]
pub fn stopping_trace(
    seed: u64,
    entities: usize,
    features: usize,
    eta: f64,
    gap: usize,
    innovation: f64,
) -> String {
    let gap = gap.clamp(1, 30);
    let cfg = synth(
        seed,
        gap + 1,
        entities.clamp(12, 200),
        features.clamp(2, 30),
        innovation,
    );
    let panel = match generate(&cfg) {
        Ok(p) => p.slices,
        Err(e) => return err_json(&e.to_string()),
    };
    let topo = match Topology::new(cfg.features, vec![8, 4], true) {
        Ok(t) => t,
        Err(e) => return err_json(&e.to_string()),
    };
    let stop = StopConfig {
        max_iterations: 120,
        tolerance: 1e-4,
        patience: 8,
        step_size: eta.clamp(1e-5, 0.5),
        batch_size: 25,
    };
    let mut stream = SeedStream::new(seed);
    let theta0 = WeightSet::init(&topo, &mut stream);
    let mut trace = Vec::new();
    let result = match early_stopping(
        &topo,
        &theta0,
        panel[0].x.view(),
        panel[0].r.view(),
        panel[gap].x.view(),
        panel[gap].r.view(),
        &stop,
        &LossConfig::mse_only(),
        &mut stream,
        Some(&mut trace),
    ) {
        Ok(r) => r,
        Err(e) => return err_json(&e.to_string()),
    };
    let view = TraceView {
        k: trace.iter().map(|r| r.0).collect(),
        train_loss: trace.iter().map(|r| r.1).collect(),
        val_loss: trace.iter().map(|r| r.2).collect(),
        tau_best: result.tau_best,
        stopped_at: trace.len(),
    };
    serde_json::to_string(&view).unwrap_or_else(|e| err_json(&e.to_string()))
}
