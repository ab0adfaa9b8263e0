//! First-order perturbation statistics of the compliance and their gradients.
//!
//! All gradients here are taken with respect to member areas; the design
//! pipeline chains them to the raw design variables.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fem::{compliance, StiffnessSystem, TrussModel};
use crate::field::Covariance;
use crate::sparse::{dot, norm};

/// How `∂σ_J/∂A` is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientPath {
    /// One extra solve with the aggregated right-hand side.
    #[default]
    Adjoint,
    /// One solve per member.
    PerMember,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceStatistics {
    pub mean: f64,
    pub std_dev: f64,
    /// `∂J̄/∂A`.
    pub grad_mean: Vec<f64>,
    /// `∂σ_J/∂A`; empty when not requested.
    pub grad_std: Vec<f64>,
    /// `∂J/∂r` at the mean moduli.
    pub dj_dr: Vec<f64>,
    /// `C_r ∂J/∂r`.
    pub w: Vec<f64>,
    /// Full-length displacement at the mean moduli.
    pub displacement: Vec<f64>,
}

pub fn mean_compliance(f: &[f64], u: &[f64]) -> f64 {
    compliance(f, u)
}

/// `∂J/∂r_e = −(A_e/l_e) δ_e²`.
pub fn compliance_gradient_wrt_r(model: &TrussModel, u_full: &[f64], areas: &[f64]) -> Vec<f64> {
    let m = model.lattice().members();
    model
        .elongations(u_full)
        .iter()
        .enumerate()
        .map(|(e, d)| -areas[e] / m[e].length * d * d)
        .collect()
}

/// `σ_J = √(∂J/∂r · C ∂J/∂r)` and the product `w = C ∂J/∂r`.
pub fn std_dev_compliance(dj_dr: &[f64], field: &dyn Covariance) -> Result<(f64, Vec<f64>)> {
    let w = field.apply(dj_dr)?;
    let var = dot(dj_dr, &w);
    // tolerance relative to the Cauchy-Schwarz bound |a·b| <= |a||b|
    if var < -1e-14 * norm(dj_dr) * norm(&w) {
        return Err(Error::NumericalConsistency(format!(
            "compliance variance {var} is negative; covariance not positive semi-definite"
        )));
    }
    Ok((var.max(0.0).sqrt(), w))
}

/// `∂J̄/∂A_e = −(E_e/l_e) δ_e²`.
pub fn grad_mean_compliance(model: &TrussModel, u_full: &[f64], young: &[f64]) -> Vec<f64> {
    let m = model.lattice().members();
    model
        .elongations(u_full)
        .iter()
        .enumerate()
        .map(|(e, d)| -young[e] / m[e].length * d * d)
        .collect()
}

/// `z = Σ_f w_f (A_f/l_f) B_f u`, the derivative of `∂J/∂r · w` in `u` up to a factor −2.
fn aggregated_load(model: &TrussModel, u_full: &[f64], areas: &[f64], w: &[f64]) -> Vec<f64> {
    let m = model.lattice().members();
    let mut z = vec![0.0; u_full.len()];
    for e in 0..m.len() {
        model.add_member_action(e, w[e] * areas[e] / m[e].length, u_full, &mut z);
    }
    z
}

/// `∂σ_J/∂A` by either path; zero (with a warning) when `σ_J = 0`.
#[allow(clippy::too_many_arguments)]
pub fn grad_std_compliance(
    system: &StiffnessSystem,
    u_full: &[f64],
    young: &[f64],
    areas: &[f64],
    w: &[f64],
    std_dev: f64,
    path: GradientPath,
) -> Vec<f64> {
    let model = system.model();
    let members = model.lattice().members();
    let n = members.len();
    if std_dev == 0.0 {
        log::warn!("σ_J = 0: standard-deviation gradient set to zero");
        return vec![0.0; n];
    }
    let delta_u = model.elongations(u_full);
    let z = aggregated_load(model, u_full, areas, w);
    let direct = |e: usize| -w[e] * delta_u[e] * delta_u[e] / members[e].length;
    match path {
        GradientPath::Adjoint => {
            let y = model.expand(&system.solve(&model.reduce(&z)));
            (0..n)
                .map(|e| {
                    let k = young[e] / members[e].length;
                    (2.0 * k * model.elongation(e, &y) * delta_u[e] + direct(e)) / std_dev
                })
                .collect()
        }
        GradientPath::PerMember => {
            let z_red = model.reduce(&z);
            let one = |e: usize| -> f64 {
                let mut rhs = vec![0.0; u_full.len()];
                model.add_member_action(e, -young[e] / members[e].length, u_full, &mut rhs);
                let du = system.solve(&model.reduce(&rhs));
                (-2.0 * dot(&z_red, &du) + direct(e)) / std_dev
            };
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(one).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(one).collect()
            }
        }
    }
}

/// Assembles at the mean moduli and evaluates all statistics.
pub fn compliance_statistics(
    model: &Arc<TrussModel>,
    areas: &[f64],
    field: &dyn Covariance,
    path: Option<GradientPath>,
) -> Result<ComplianceStatistics> {
    let young = field.mean();
    if young.len() != model.lattice().num_members() {
        return Err(invalid("field size differs from member count"));
    }
    let system = model.assemble(young, areas)?;
    let f = model.lattice().load_vector();
    let u = system.solve_full(&f);
    let mean = mean_compliance(&f, &u);
    let dj_dr = compliance_gradient_wrt_r(model, &u, areas);
    let (std_dev, w) = std_dev_compliance(&dj_dr, field)?;
    let grad_mean = grad_mean_compliance(model, &u, young);
    let grad_std = match path {
        Some(p) => grad_std_compliance(&system, &u, young, areas, &w, std_dev, p),
        None => Vec::new(),
    };
    Ok(ComplianceStatistics {
        mean,
        std_dev,
        grad_mean,
        grad_std,
        dj_dr,
        w,
        displacement: u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub requested: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub mean_stderr: f64,
    pub std_dev_stderr: f64,
    /// Per-sample compliance, `None` for rejected samples.
    #[serde(skip)]
    pub samples: Vec<Option<f64>>,
}

/// Random stream for sample `index`; independent of thread scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Direct sampling of the compliance with one solve per field realisation.
pub fn monte_carlo_validate(
    model: &Arc<TrussModel>,
    areas: &[f64],
    field: &dyn Covariance,
    count: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    if count < 2 {
        return Err(invalid("Monte Carlo validation needs at least two samples"));
    }
    let f = model.lattice().load_vector();
    let one = |i: usize| -> Option<f64> {
        let young = field.sample(&mut sample_rng(seed, i as u64));
        if young.iter().any(|e| !(*e > 0.0)) {
            return None;
        }
        let system = model.assemble(&young, areas).ok()?;
        Some(compliance(&f, &system.solve_full(&f)))
    };
    #[cfg(feature = "parallel")]
    let samples: Vec<Option<f64>> = {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<Option<f64>> = (0..count).map(one).collect();

    let ok: Vec<f64> = samples.iter().flatten().copied().collect();
    let n = ok.len();
    if n < 2 {
        return Err(Error::NumericalConsistency(format!(
            "only {n} of {count} Monte Carlo samples were admissible"
        )));
    }
    let mean = ok.iter().sum::<f64>() / n as f64;
    let var = ok.iter().map(|j| (j - mean) * (j - mean)).sum::<f64>() / (n - 1) as f64;
    let std_dev = var.sqrt();
    Ok(MonteCarloReport {
        requested: count,
        accepted: n,
        rejected: count - n,
        mean,
        std_dev,
        mean_stderr: std_dev / (n as f64).sqrt(),
        std_dev_stderr: std_dev / (2.0 * (n - 1) as f64).sqrt(),
        samples,
    })
}
