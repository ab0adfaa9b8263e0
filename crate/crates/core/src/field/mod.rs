//! Gaussian random fields of member Young's moduli.
//!
//! The precision matrix comes from a finite element discretisation of
//! `(κ² − Δ)^β r = g / τ` on the adjoint lattice, so it stays sparse for
//! integer `β`.

mod covariance;
mod matern;
mod operators;
mod precision;

pub use covariance::{Covariance, UncorrelatedField};
pub use matern::{bessel_k, matern_at_distance, matern_covariance};
pub use operators::{assemble_adjoint_operators, AdjointOperators};
pub use precision::{build_precision, precision_closed_form, PrecisionOperator};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::Lattice;

/// Correlation length, constant or affine along one coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthScale {
    Constant(f64),
    /// `ℓ(x) = offset + slope · x[axis]`.
    Affine { axis: usize, offset: f64, slope: f64 },
}

impl LengthScale {
    pub fn at(&self, x: &[f64]) -> f64 {
        match *self {
            LengthScale::Constant(l) => l,
            LengthScale::Affine { axis, offset, slope } => offset + slope * x[axis],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, LengthScale::Constant(_))
    }
}

/// How the field variance is fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// White-noise scale `τ` from the continuum Matérn relation.
    #[default]
    Spde,
    /// Rescale every vertex so its marginal standard deviation is exactly `σ`;
    /// correlations are those of the SPDE field.
    Marginal,
}

/// Direction-dependent scaling of the white-noise forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anisotropy {
    pub direction: Vec<f64>,
    pub d_par: f64,
    pub d_perp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFieldSpec {
    /// Mean Young's modulus per member.
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub beta: u32,
    pub length_scale: LengthScale,
    pub anisotropy: Option<Anisotropy>,
    /// Dimension `d` entering `ν = 2β − d/2` and the variance normalisation.
    pub dimension: usize,
    pub normalization: Normalization,
}

/// Smoothness `ν = 2β − d/2`.
pub fn smoothness(beta: u32, dimension: usize) -> f64 {
    2.0 * beta as f64 - dimension as f64 / 2.0
}

/// Integer exponent `β = ν/2 + d/4`; fails unless it is a positive integer.
pub fn beta_from_nu(nu: f64, dimension: usize) -> Result<u32> {
    let beta = nu / 2.0 + dimension as f64 / 4.0;
    let rounded = beta.round();
    if rounded >= 1.0 && (beta - rounded).abs() < 1e-12 {
        Ok(rounded as u32)
    } else {
        Err(invalid(format!(
            "ν = {nu} with d = {dimension} gives β = {beta}, which is not a positive integer"
        )))
    }
}

impl RandomFieldSpec {
    pub fn nu(&self) -> f64 {
        smoothness(self.beta, self.dimension)
    }

    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        if self.mean.len() != lattice.num_members() {
            return Err(invalid("field mean length differs from member count"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("field standard deviation must be positive"));
        }
        if self.beta == 0 {
            return Err(invalid("β must be a positive integer"));
        }
        if !(1..=3).contains(&self.dimension) {
            return Err(invalid("field dimension must be 1, 2 or 3"));
        }
        if self.nu() <= 0.0 {
            return Err(invalid(format!(
                "ν = 2β − d/2 = {} must be positive",
                self.nu()
            )));
        }
        if let LengthScale::Affine { axis, .. } = self.length_scale {
            if axis >= lattice.dim() {
                return Err(invalid("length-scale axis exceeds lattice dimension"));
            }
        }
        for m in lattice.members() {
            let l = self.length_scale.at(&m.centroid);
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!(
                    "length scale {l} at {:?} is not positive",
                    m.centroid
                )));
            }
        }
        if let Some(a) = &self.anisotropy {
            validate_anisotropy(a, lattice.dim())?;
        }
        Ok(())
    }
}

fn validate_anisotropy(a: &Anisotropy, dim: usize) -> Result<()> {
    if !(a.d_par > 0.0 && a.d_perp > 0.0) {
        return Err(invalid("anisotropy parameters d_par and d_perp must be positive"));
    }
    if a.direction.len() != dim {
        return Err(invalid("anisotropy direction has the wrong dimension"));
    }
    let n = a.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("anisotropy direction must be a unit vector (norm {n})")));
    }
    Ok(())
}

/// Per-vertex SPDE coefficients `κ` and `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdeParameters {
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
}

/// `κ(x) = √(2ν)/ℓ(x)` and
/// `τ²(x) = Γ(ν) / (σ² Γ(ν + d/2) (4π)^{d/2} κ(x)^{2ν})` at each position.
pub fn spde_parameters(spec: &RandomFieldSpec, positions: &[Vec<f64>]) -> Result<SpdeParameters> {
    let nu = spec.nu();
    if nu <= 0.0 {
        return Err(invalid(format!("ν = {nu} must be positive; increase β")));
    }
    if !(spec.sigma > 0.0) {
        return Err(invalid("σ must be positive"));
    }
    let d = spec.dimension as f64;
    let norm = libm::tgamma(nu)
        / (spec.sigma * spec.sigma
            * libm::tgamma(nu + d / 2.0)
            * (4.0 * std::f64::consts::PI).powf(d / 2.0));
    let mut kappa = Vec::with_capacity(positions.len());
    let mut tau = Vec::with_capacity(positions.len());
    for x in positions {
        let l = spec.length_scale.at(x);
        if !(l > 0.0) {
            return Err(invalid(format!("length scale {l} is not positive at {x:?}")));
        }
        let k = (2.0 * nu).sqrt() / l;
        kappa.push(k);
        tau.push((norm / k.powf(2.0 * nu)).sqrt());
    }
    Ok(SpdeParameters { kappa, tau })
}

/// `D_ee = d∥ |n·t_e| + d⊥ (1 − |n·t_e|)` for every member.
pub fn anisotropy_diagonal(anisotropy: &Anisotropy, lattice: &Lattice) -> Result<Vec<f64>> {
    validate_anisotropy(anisotropy, lattice.dim())?;
    Ok(lattice
        .members()
        .iter()
        .map(|m| {
            let c: f64 = m
                .tangent
                .iter()
                .zip(&anisotropy.direction)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .abs()
                .min(1.0);
            anisotropy.d_par * c + anisotropy.d_perp * (1.0 - c)
        })
        .collect())
}
