//! wasm-bindgen entry points for the static demo page in `www/`.
//!
//! Every function takes a run configuration as JSON text and returns JSON
//! text, so the page needs no generated bindings beyond strings.

use std::path::Path;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use latro_core::config::{RunConfig, Scenario};
use latro_core::lattice::Lattice;
use latro_core::optim::solve_weighted;
use latro_core::robust::sample_rng;

#[derive(Serialize)]
struct Geometry {
    dimension: usize,
    joints: Vec<Vec<f64>>,
    members: Vec<[usize; 2]>,
}

impl Geometry {
    fn of(lattice: &Lattice) -> Self {
        Self {
            dimension: lattice.dim(),
            joints: lattice.joints().iter().map(|j| j.position.clone()).collect(),
            members: lattice.members().iter().map(|m| m.joints).collect(),
        }
    }
}

#[derive(Serialize)]
struct OptimizeOutput {
    geometry: Geometry,
    alpha: f64,
    mean: f64,
    std_dev: f64,
    volume: f64,
    iterations: usize,
    converged: bool,
    area: Vec<f64>,
    /// `(iteration, mean, std_dev)` per MMA step.
    history: Vec<(usize, f64, f64)>,
}

#[derive(Serialize)]
struct FieldOutput {
    geometry: Geometry,
    samples: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CurveOutput {
    control_points: [[f64; 2]; 6],
    s: Vec<f64>,
    penalized: Vec<f64>,
}

fn scenario(config: &str) -> Result<Scenario, JsError> {
    let config = RunConfig::from_json(config, "config")?;
    Ok(Scenario::build(config, Path::new("."))?)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    Ok(serde_json::to_string(value)?)
}

/// Optimises at `alpha` (the config value when `NaN`).
#[wasm_bindgen]
pub fn optimize(config: &str, alpha: f64) -> Result<String, JsError> {
    let sc = scenario(config)?;
    let opt = sc.optimization()?.clone();
    let alpha = if alpha.is_nan() { opt.alpha.unwrap_or(1.0) } else { alpha };
    let template = sc.problem()?;
    let (_, r) = solve_weighted(&template, alpha, opt.reference, opt.stop(), opt.mma)?;
    to_json(&OptimizeOutput {
        geometry: Geometry::of(sc.lattice()),
        alpha,
        mean: r.evaluation.stats.mean,
        std_dev: r.evaluation.stats.std_dev,
        volume: r.evaluation.volume,
        iterations: r.iterations,
        converged: r.stop == latro_core::optim::StopReason::Converged,
        area: r.evaluation.state.areas.clone(),
        history: r.history.iter().map(|h| (h.iteration, h.mean, h.std_dev)).collect(),
    })
}

/// Draws `count` realisations of the configured field.
#[wasm_bindgen]
pub fn sample_field(config: &str, seed: u64, count: usize) -> Result<String, JsError> {
    let sc = scenario(config)?;
    let cov = sc.field.covariance();
    let samples = (0..count as u64)
        .map(|i| cov.sample(&mut sample_rng(seed, i)))
        .collect();
    to_json(&FieldOutput {
        geometry: Geometry::of(sc.lattice()),
        samples,
    })
}

/// Tabulates the configured penalisation curve at `samples` points on [0, 1].
#[wasm_bindgen]
pub fn penalty_curve(config: &str, samples: usize) -> Result<String, JsError> {
    let config = RunConfig::from_json(config, "config")?;
    let curve = config
        .regularization
        .penalty
        .as_ref()
        .ok_or_else(|| JsError::new("regularization.penalty is not set"))?
        .curve()?;
    let n = samples.max(2);
    let s: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let penalized = s.iter().map(|&x| curve.eval(x).0).collect();
    to_json(&CurveOutput {
        control_points: *curve.control_points(),
        s,
        penalized,
    })
}
