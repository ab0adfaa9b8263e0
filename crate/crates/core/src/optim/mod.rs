//! Robust compliance minimisation under a volume constraint.

mod mma;

pub use mma::{MmaOptions, MmaState};

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fem::TrussModel;
use crate::field::Covariance;
use crate::regularization::{DesignMap, DesignState};
use crate::robust::{compliance_statistics, ComplianceStatistics, GradientPath};

/// Normalisation constants `J̄*` and `σ_J*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopCriteria {
    pub max_iterations: usize,
    /// Largest componentwise design change that counts as converged.
    pub tolerance: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone)]
pub struct OptimizationProblem {
    pub model: Arc<TrussModel>,
    pub field: Arc<dyn Covariance>,
    pub design: DesignMap,
    pub volume_max: f64,
    pub alpha: f64,
    pub reference: Reference,
    pub gradient_path: GradientPath,
}

/// Everything computed at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: DesignState,
    pub stats: ComplianceStatistics,
    pub objective: f64,
    pub objective_gradient: Vec<f64>,
    pub volume: f64,
    /// `g = V − V_max`.
    pub constraint: f64,
    pub constraint_gradient: Vec<f64>,
}

impl OptimizationProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.lattice().num_members();
        if self.design.len() != n || self.field.dim() != n {
            return Err(invalid("design map, field and lattice sizes differ"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("α = {} outside [0, 1]", self.alpha)));
        }
        let n = self.reference;
        if !(n.mean > 0.0 && n.std_dev > 0.0 && n.mean.is_finite() && n.std_dev.is_finite()) {
            return Err(invalid("normalisation constants must be positive"));
        }
        let (a_min, _) = self.design.area_bounds();
        let v_min = a_min * self.design.lengths().iter().sum::<f64>();
        if !(self.volume_max > v_min) {
            return Err(invalid(format!(
                "V_max = {} must exceed the minimum volume {v_min}",
                self.volume_max
            )));
        }
        Ok(())
    }

    /// `(α/J̄*, (1−α)/σ_J*)`.
    pub fn weights(&self) -> (f64, f64) {
        (
            self.alpha / self.reference.mean,
            (1.0 - self.alpha) / self.reference.std_dev,
        )
    }

    pub fn evaluate(&self, s: &[f64]) -> Result<Evaluation> {
        let state = self.design.areas_from_design(s)?;
        let (we, ws) = self.weights();
        let path = (ws != 0.0).then_some(self.gradient_path);
        let stats = compliance_statistics(&self.model, &state.areas, self.field.as_ref(), path)
            .map_err(|e| match e {
                Error::Mechanism { pivot } => {
                    log::error!("singular stiffness at design {s:?}");
                    Error::Mechanism { pivot }
                }
                other => other,
            })?;
        let objective = we * stats.mean + ws * stats.std_dev;
        let grad_area: Vec<f64> = if ws == 0.0 {
            stats.grad_mean.iter().map(|g| we * g).collect()
        } else {
            stats
                .grad_mean
                .iter()
                .zip(&stats.grad_std)
                .map(|(gm, gs)| we * gm + ws * gs)
                .collect()
        };
        let objective_gradient = self.design.chain(&state, &grad_area);
        let volume = self.design.volume(&state);
        let constraint_gradient = self.design.volume_gradient(&state);
        Ok(Evaluation {
            constraint: volume - self.volume_max,
            state,
            stats,
            objective,
            objective_gradient,
            volume,
            constraint_gradient,
        })
    }

    /// Uniform design with `V(s) = V_max`.
    pub fn initial_design(&self) -> Result<Vec<f64>> {
        self.design.uniform_design_for_volume(self.volume_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub objective: f64,
    pub volume: f64,
    pub max_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub design: Vec<f64>,
    pub evaluation: Evaluation,
    pub history: Vec<HistoryRow>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Seconds; zero where the platform has no clock (browser wasm).
    pub wall_time: f64,
}

/// Shifts the design uniformly (clamped to `[0, 1]`) until `V ≤ V_max`.
fn restore_feasibility(problem: &OptimizationProblem, s: &[f64]) -> Result<Vec<f64>> {
    let vol = |t: f64| -> Result<(f64, Vec<f64>)> {
        let x: Vec<f64> = s.iter().map(|v| (v - t).clamp(0.0, 1.0)).collect();
        let st = problem.design.areas_from_design(&x)?;
        Ok((problem.design.volume(&st), x))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if vol(mid)?.0 > problem.volume_max {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(vol(hi)?.1)
}

struct Stopwatch(#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))] std::time::Instant);

impl Stopwatch {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    fn start() -> Self {
        Self(std::time::Instant::now())
    }

    #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
    fn start() -> Self {
        Self()
    }

    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
    fn seconds(&self) -> f64 {
        0.0
    }
}

/// MMA iterations from `start` until the design change drops below the tolerance.
pub fn optimize(
    problem: &OptimizationProblem,
    start: Option<Vec<f64>>,
    stop: StopCriteria,
    mma: MmaOptions,
) -> Result<OptimizationResult> {
    problem.validate()?;
    let clock = Stopwatch::start();
    let s0 = match start {
        Some(s) => s,
        None => problem.initial_design()?,
    };
    let mut eval = problem.evaluate(&s0)?;
    // objective scaled to 1 at the start; constraint as V/V_max − 1
    let f_scale = if eval.objective.abs() > 0.0 {
        1.0 / eval.objective.abs()
    } else {
        1.0
    };
    let g_scale = 1.0 / problem.volume_max;
    let mut state = MmaState::new(s0, mma)?;
    let mut history = Vec::new();
    let mut reason = StopReason::IterationLimit;
    let mut iterations = 0;
    for k in 1..=stop.max_iterations {
        let df: Vec<f64> = eval.objective_gradient.iter().map(|g| g * f_scale).collect();
        let dg: Vec<f64> = eval.constraint_gradient.iter().map(|g| g * g_scale).collect();
        let previous = state.x.clone();
        let next = state.step(eval.objective * f_scale, &df, eval.constraint * g_scale, &dg)?;
        let change = next
            .iter()
            .zip(&previous)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        eval = problem.evaluate(&next)?;
        iterations = k;
        history.push(HistoryRow {
            iteration: k,
            mean: eval.stats.mean,
            std_dev: eval.stats.std_dev,
            objective: eval.objective,
            volume: eval.volume,
            max_change: change,
        });
        log::debug!(
            "iter {k}: J̄ = {:.6e}, σ_J = {:.6e}, F = {:.6e}, V = {:.6e}, Δs = {change:.3e}",
            eval.stats.mean,
            eval.stats.std_dev,
            eval.objective,
            eval.volume
        );
        if change < stop.tolerance {
            reason = StopReason::Converged;
            break;
        }
    }
    let mut design = state.x.clone();
    if eval.constraint > 1e-6 * problem.volume_max {
        log::info!(
            "final volume exceeds V_max by {:.3e}; shifting the design to restore feasibility",
            eval.constraint
        );
        design = restore_feasibility(problem, &design)?;
        eval = problem.evaluate(&design)?;
    }
    Ok(OptimizationResult {
        design,
        evaluation: eval,
        history,
        iterations,
        stop: reason,
        wall_time: clock.seconds(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub objective: f64,
    pub volume: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `J̄` and `σ_J` of the initial design; a scale for runs whose weight makes
/// one reference irrelevant.
pub fn initial_reference(template: &OptimizationProblem) -> Result<Reference> {
    let probe = template.evaluate(&template.initial_design()?)?;
    Ok(Reference {
        mean: probe.stats.mean,
        std_dev: if probe.stats.std_dev > 0.0 {
            probe.stats.std_dev
        } else {
            1.0
        },
    })
}

/// Runs with `α = 1` and `α = 0` to fix `J̄*`, `σ_J*`.
pub fn reference_runs(
    template: &OptimizationProblem,
    stop: StopCriteria,
    mma: MmaOptions,
) -> Result<(Reference, OptimizationResult, OptimizationResult)> {
    let start = template.initial_design()?;
    let provisional = initial_reference(template)?;
    let run = |alpha: f64| {
        let mut p = template.clone();
        p.alpha = alpha;
        p.reference = provisional;
        optimize(&p, Some(start.clone()), stop, mma)
    };
    let r1 = run(1.0)?;
    let r0 = run(0.0)?;
    let reference = Reference {
        mean: r1.evaluation.stats.mean,
        std_dev: r0.evaluation.stats.std_dev,
    };
    if !(reference.mean > 0.0 && reference.std_dev > 0.0) {
        return Err(Error::OptimizationAbort(format!(
            "reference runs gave J̄* = {}, σ_J* = {}",
            reference.mean, reference.std_dev
        )));
    }
    Ok((reference, r1, r0))
}

/// One run at `alpha`. Missing references come from the reference runs when
/// both objective terms are weighted, otherwise from the initial design.
pub fn solve_weighted(
    template: &OptimizationProblem,
    alpha: f64,
    reference: Option<Reference>,
    stop: StopCriteria,
    mma: MmaOptions,
) -> Result<(Reference, OptimizationResult)> {
    let reference = match reference {
        Some(r) => r,
        None if alpha == 0.0 || alpha == 1.0 => initial_reference(template)?,
        None => {
            log::info!("α = {alpha}: running α = 1 and α = 0 for the reference values");
            reference_runs(template, stop, mma)?.0
        }
    };
    let mut p = template.clone();
    p.alpha = alpha;
    p.reference = reference;
    Ok((reference, optimize(&p, None, stop, mma)?))
}

fn point(alpha: f64, r: &OptimizationResult, norm: Reference) -> ParetoPoint {
    let e = &r.evaluation;
    ParetoPoint {
        alpha,
        mean: e.stats.mean,
        std_dev: e.stats.std_dev,
        objective: alpha / norm.mean * e.stats.mean + (1.0 - alpha) / norm.std_dev * e.stats.std_dev,
        volume: e.volume,
        iterations: r.iterations,
        converged: r.stop == StopReason::Converged,
    }
}

/// Pareto front over `alphas`, which must contain 1 and 0.
pub fn pareto_sweep(
    template: &OptimizationProblem,
    alphas: &[f64],
    stop: StopCriteria,
    mma: MmaOptions,
) -> Result<(Reference, Vec<(ParetoPoint, OptimizationResult)>)> {
    if !alphas.contains(&1.0) || !alphas.contains(&0.0) {
        return Err(invalid(
            "the α list must include 1 and 0, which fix the normalisation constants J̄* and σ_J*",
        ));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(invalid(format!("α = {a} outside [0, 1]")));
    }
    let (norm, r1, r0) = reference_runs(template, stop, mma)?;
    let start = template.initial_design()?;
    let others: Vec<f64> = alphas.iter().copied().filter(|a| *a != 0.0 && *a != 1.0).collect();
    let run = |alpha: f64| -> Result<OptimizationResult> {
        let mut p = template.clone();
        p.alpha = alpha;
        p.reference = norm;
        optimize(&p, Some(start.clone()), stop, mma)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<OptimizationResult>> = {
        use rayon::prelude::*;
        others.par_iter().map(|&a| run(a)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<OptimizationResult>> = others.iter().map(|&a| run(a)).collect();

    let mut by_alpha = vec![(1.0, r1), (0.0, r0)];
    for (a, r) in others.into_iter().zip(results) {
        by_alpha.push((a, r?));
    }
    let mut out = Vec::new();
    for &a in alphas {
        if let Some((_, r)) = by_alpha.iter().find(|(b, _)| *b == a) {
            out.push((point(a, r, norm), r.clone()));
        }
    }
    Ok((norm, out))
}
