use std::sync::OnceLock;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::operators::{assemble_adjoint_operators, AdjointOperators};
use super::{anisotropy_diagonal, spde_parameters, Covariance, Normalization, RandomFieldSpec};
use crate::error::{invalid, Error, Result};
use crate::lattice::{AdjointLattice, Lattice};
use crate::sparse::{Cholesky, CsrMatrix};

/// Sparse Gaussian field `E = mean + S r` with `r ~ N(0, Q₀⁻¹)`.
///
/// `r = (L⁻¹M)^{β−1} L⁻¹ diag(1/s) g` with `g ~ N(0, M)`, `L = diag(κ²)M + A`
/// and `s = τ·D` the per-vertex noise scale. `S` is the identity unless the
/// marginal normalisation is requested; the stored precision is `S⁻¹Q₀S⁻¹`.
#[derive(Debug)]
pub struct PrecisionOperator {
    mean: Vec<f64>,
    beta: u32,
    mass: Vec<f64>,
    noise_scale: Vec<f64>,
    output_scale: Option<Vec<f64>>,
    system: CsrMatrix,
    system_factor: Cholesky,
    precision: CsrMatrix,
    precision_factor: OnceLock<std::result::Result<Cholesky, usize>>,
}

/// `τ² L (M⁻¹L)^{2β−1}` for constant `κ` and `τ`.
pub fn precision_closed_form(ops: &AdjointOperators, kappa: f64, tau: f64, beta: u32) -> CsrMatrix {
    let l = system_matrix(ops, &vec![kappa; ops.mass.len()]);
    let inv_m: Vec<f64> = ops.mass.iter().map(|m| 1.0 / m).collect();
    let step = l.scale(Some(&inv_m), None);
    let mut q = l.clone();
    for _ in 0..2 * beta - 1 {
        q = q.matmul(&step);
    }
    symmetrize(&q.scale(Some(&vec![tau * tau; inv_m.len()]), None))
}

/// `B⁻ᵀ diag(s²/M) B⁻¹` with `B⁻¹ = (L M⁻¹)^{β−1} L`.
fn precision_general(ops: &AdjointOperators, l: &CsrMatrix, noise_scale: &[f64], beta: u32) -> CsrMatrix {
    let inv_m: Vec<f64> = ops.mass.iter().map(|m| 1.0 / m).collect();
    let step = l.scale(None, Some(&inv_m));
    let mut b_inv = l.clone();
    for _ in 1..beta {
        b_inv = step.matmul(&b_inv);
    }
    let w: Vec<f64> = noise_scale.iter().zip(&ops.mass).map(|(s, m)| s * s / m).collect();
    symmetrize(&b_inv.transpose().scale(None, Some(&w)).matmul(&b_inv))
}

fn system_matrix(ops: &AdjointOperators, kappa: &[f64]) -> CsrMatrix {
    let d: Vec<f64> = kappa.iter().zip(&ops.mass).map(|(k, m)| k * k * m).collect();
    ops.stiffness.add_diagonal(&d)
}

fn symmetrize(a: &CsrMatrix) -> CsrMatrix {
    let trips: Vec<_> = a
        .triplets()
        .flat_map(|(i, j, v)| [(i, j, 0.5 * v), (j, i, 0.5 * v)])
        .collect();
    CsrMatrix::from_triplets(a.nrows(), a.ncols(), &trips)
}

pub fn build_precision(spec: &RandomFieldSpec, lattice: &Lattice) -> Result<PrecisionOperator> {
    spec.validate(lattice)?;
    let adjoint = AdjointLattice::build(lattice)?;
    let ops = assemble_adjoint_operators(&adjoint)?;
    let params = spde_parameters(spec, &adjoint.positions)?;
    let n = ops.mass.len();
    let d = match &spec.anisotropy {
        Some(a) => anisotropy_diagonal(a, lattice)?,
        None => vec![1.0; n],
    };
    let noise_scale: Vec<f64> = params.tau.iter().zip(&d).map(|(t, d)| t * d).collect();
    let system = system_matrix(&ops, &params.kappa);
    let system_factor = Cholesky::factorize(&system).map_err(|pivot| Error::NotSpd {
        what: "SPDE operator",
        pivot,
    })?;
    let precision = if spec.length_scale.is_constant() && spec.anisotropy.is_none() {
        precision_closed_form(&ops, params.kappa[0], params.tau[0], spec.beta)
    } else {
        precision_general(&ops, &system, &noise_scale, spec.beta)
    };
    log::debug!(
        "precision: {n} vertices, {} edges, nnz(Q) = {}",
        adjoint.num_edges(),
        precision.nnz()
    );
    let mut op = PrecisionOperator {
        mean: spec.mean.clone(),
        beta: spec.beta,
        mass: ops.mass,
        noise_scale,
        output_scale: None,
        system,
        system_factor,
        precision,
        precision_factor: OnceLock::new(),
    };
    if spec.normalization == Normalization::Marginal {
        let var = op.marginal_variances()?;
        let scale: Vec<f64> = var.iter().map(|v| spec.sigma / v.sqrt()).collect();
        let inv: Vec<f64> = scale.iter().map(|x| 1.0 / x).collect();
        op.precision = op.precision.scale(Some(&inv), Some(&inv));
        op.output_scale = Some(scale);
    }
    Ok(op)
}

impl PrecisionOperator {
    pub fn precision(&self) -> &CsrMatrix {
        &self.precision
    }

    /// The operator `L = diag(κ²)M + A`.
    pub fn system(&self) -> &CsrMatrix {
        &self.system
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    /// Per-vertex factor applied after the recursion, if any.
    pub fn output_scale(&self) -> Option<&[f64]> {
        self.output_scale.as_deref()
    }

    /// Zero-mean perturbation `E − mean`.
    pub fn sample_perturbation(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut r: Vec<f64> = self
            .mass
            .iter()
            .zip(&self.noise_scale)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m.sqrt() * z / s
            })
            .collect();
        self.system_factor.solve_in_place(&mut r);
        for _ in 1..self.beta {
            for (x, m) in r.iter_mut().zip(&self.mass) {
                *x *= m;
            }
            self.system_factor.solve_in_place(&mut r);
        }
        if let Some(sc) = &self.output_scale {
            for (x, c) in r.iter_mut().zip(sc) {
                *x *= c;
            }
        }
        r
    }

    /// `C x` by solving `Q y = x` with the factorised precision (built on first use).
    pub fn covariance_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(invalid("covariance_apply: vector length differs from field size"));
        }
        let factor = self
            .precision_factor
            .get_or_init(|| Cholesky::factorize(&self.precision));
        match factor {
            Ok(f) => Ok(f.solve(x)),
            Err(pivot) => Err(Error::NotSpd {
                what: "precision matrix",
                pivot: *pivot,
            }),
        }
    }

    /// `C x` through `2β` solves with `L`, never touching `Q`.
    pub fn covariance_apply_recursive(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(invalid("covariance_apply: vector length differs from field size"));
        }
        let mut y = x.to_vec();
        if let Some(sc) = &self.output_scale {
            for (v, c) in y.iter_mut().zip(sc) {
                *v *= c;
            }
        }
        for _ in 1..self.beta {
            self.system_factor.solve_in_place(&mut y);
            for (v, m) in y.iter_mut().zip(&self.mass) {
                *v *= m;
            }
        }
        self.system_factor.solve_in_place(&mut y);
        for ((v, m), s) in y.iter_mut().zip(&self.mass).zip(&self.noise_scale) {
            *v *= m / (s * s);
        }
        self.system_factor.solve_in_place(&mut y);
        for _ in 1..self.beta {
            for (v, m) in y.iter_mut().zip(&self.mass) {
                *v *= m;
            }
            self.system_factor.solve_in_place(&mut y);
        }
        if let Some(sc) = &self.output_scale {
            for (v, c) in y.iter_mut().zip(sc) {
                *v *= c;
            }
        }
        Ok(y)
    }

    /// Diagonal of `C`, one recursive covariance application per member.
    pub fn marginal_variances(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let column = |i: usize| -> Result<f64> {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            Ok(self.covariance_apply_recursive(&e)?[i])
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(column).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n).map(column).collect()
        }
    }
}

impl Covariance for PrecisionOperator {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.covariance_apply(x)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let r = self.sample_perturbation(rng);
        self.mean.iter().zip(r).map(|(m, r)| m + r).collect()
    }
}
