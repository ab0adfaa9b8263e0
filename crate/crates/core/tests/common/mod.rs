#![allow(dead_code)]

pub mod invariants;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use latro_core::config::{RunConfig, Scenario};
use latro_core::fem::TrussModel;
use latro_core::field::UncorrelatedField;
use latro_core::lattice::{build_grid_lattice, Diagonals, Lattice};
use latro_core::optim::{OptimizationProblem, Reference};
use latro_core::regularization::DesignMap;
use latro_core::robust::GradientPath;
use latro_core::sparse::CsrMatrix;

pub fn presets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

pub fn scenario(name: &str) -> Scenario {
    let dir = presets_dir();
    let config = RunConfig::load(&dir.join(format!("{name}.json"))).unwrap();
    Scenario::build(config, &dir).unwrap()
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        m[(i, j)] += v;
    }
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Lumped mass and stiffness of linear elements on the line graph, built
/// straight from member pairs that share a joint.
pub fn dense_line_graph_operators(lattice: &Lattice) -> (DVector<f64>, DMatrix<f64>) {
    let n = lattice.num_members();
    let members = lattice.members();
    let mut mass = DVector::zeros(n);
    let mut stiff = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let shared = members[a].joints.iter().any(|j| members[b].joints.contains(j));
            if !shared {
                continue;
            }
            let h = members[a]
                .centroid
                .iter()
                .zip(&members[b].centroid)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            mass[a] += h / 2.0;
            mass[b] += h / 2.0;
            stiff[(a, a)] += 1.0 / h;
            stiff[(b, b)] += 1.0 / h;
            stiff[(a, b)] -= 1.0 / h;
            stiff[(b, a)] -= 1.0 / h;
        }
    }
    (mass, stiff)
}

/// Continuum Matérn scaling `(κ, τ)` for constant `ℓ`.
pub fn matern_scaling(sigma: f64, beta: u32, dimension: usize, length_scale: f64) -> (f64, f64) {
    let d = dimension as f64;
    let nu = 2.0 * beta as f64 - d / 2.0;
    let kappa = (2.0 * nu).sqrt() / length_scale;
    let tau2 = libm::tgamma(nu)
        / (sigma * sigma
            * libm::tgamma(nu + d / 2.0)
            * (4.0 * std::f64::consts::PI).powf(d / 2.0)
            * kappa.powf(2.0 * nu));
    (kappa, tau2.sqrt())
}

/// `τ² L (M⁻¹ L)^{2β−1}` with `L = κ² M + A`, all dense.
pub fn dense_precision(lattice: &Lattice, kappa: f64, tau: f64, beta: u32) -> DMatrix<f64> {
    let (mass, stiff) = dense_line_graph_operators(lattice);
    let m = DMatrix::from_diagonal(&mass);
    let l = &m * (kappa * kappa) + stiff;
    let m_inv_l = DMatrix::from_diagonal(&mass.map(|x| 1.0 / x)) * &l;
    let mut q = l.clone();
    for _ in 0..2 * beta - 1 {
        q = &q * &m_inv_l;
    }
    q * (tau * tau)
}

/// The 4 × 2 verification lattice: left edge clamped, unit load at the
/// right end of the middle row.
pub fn verification_lattice() -> Lattice {
    let mut l = build_grid_lattice(4, 2, 1.0, 0.75, Diagonals::Double).unwrap();
    for j in l.select_joints(|p| p[0].abs() < 1e-12) {
        l.fix_joint(j).unwrap();
    }
    let tip = l.select_joints(|p| (p[0] - 4.0).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
    l.add_load(tip[0], &[1.0, 0.0]).unwrap();
    l
}

/// Unfiltered, unpenalised problem on `lattice` with independent moduli.
pub fn plain_problem(lattice: Lattice, mean: f64, sigma: f64, volume_max: f64) -> OptimizationProblem {
    let n = lattice.num_members();
    let design = DesignMap::new(&lattice, 0.0, None, 1e-4, 1.0).unwrap();
    OptimizationProblem {
        model: Arc::new(TrussModel::new(lattice)),
        field: Arc::new(UncorrelatedField::new(vec![mean; n], sigma).unwrap()),
        design,
        volume_max,
        alpha: 1.0,
        reference: Reference {
            mean: 1.0,
            std_dev: 1.0,
        },
        gradient_path: GradientPath::Adjoint,
    }
}

/// Largest relative deviation, measured against the largest entry of `reference`.
pub fn rel_max_diff(value: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = value
        .iter()
        .zip(reference)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
