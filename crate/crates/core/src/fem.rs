//! Linear truss finite elements.
//!
//! Fixed DOFs are eliminated, so the reduced stiffness matrix is SPD and a
//! single Cholesky factor serves every solve of an iteration.

use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Lattice, Member};
use crate::sparse::{dot, norm, CholeskyPattern, Cholesky, CsrMatrix};

/// `[ttᵀ, −ttᵀ; −ttᵀ, ttᵀ]` as a dense row-major `2d × 2d` block.
pub fn base_block(tangent: &[f64]) -> Vec<Vec<f64>> {
    let d = tangent.len();
    let mut b = vec![vec![0.0; 2 * d]; 2 * d];
    for i in 0..d {
        for j in 0..d {
            let v = tangent[i] * tangent[j];
            b[i][j] = v;
            b[i + d][j + d] = v;
            b[i][j + d] = -v;
            b[i + d][j] = -v;
        }
    }
    b
}

fn scaled_block(member: &Member, c: f64) -> Vec<Vec<f64>> {
    let mut b = base_block(&member.tangent);
    b.iter_mut().flatten().for_each(|x| *x *= c);
    b
}

/// Member stiffness block `(E A / l) · base_block`.
pub fn element_stiffness(member: &Member, young: f64, area: f64) -> Result<Vec<Vec<f64>>> {
    if !(young > 0.0 && area > 0.0 && member.length > 0.0) {
        return Err(invalid(format!(
            "element stiffness needs E, A, l > 0 (E = {young}, A = {area}, l = {})",
            member.length
        )));
    }
    Ok(scaled_block(member, young * area / member.length))
}

/// `∂K_e/∂s_e` given the chain factor `dA_e/ds_e`.
pub fn dk_ds(member: &Member, young: f64, darea_ds: f64) -> Vec<Vec<f64>> {
    scaled_block(member, young * darea_ds / member.length)
}

/// `∂K_e/∂r_e` with respect to the member's Young's modulus.
pub fn dk_dr(member: &Member, area: f64) -> Vec<Vec<f64>> {
    scaled_block(member, area / member.length)
}

/// `∂²K_e/∂r_e∂s_e`.
pub fn d2k_drds(member: &Member, darea_ds: f64) -> Vec<Vec<f64>> {
    scaled_block(member, darea_ds / member.length)
}

/// DOF bookkeeping and symbolic factorisation for one lattice.
#[derive(Debug, Clone)]
pub struct TrussModel {
    lattice: Lattice,
    /// Global DOF → reduced index, `None` when fixed.
    reduced: Vec<Option<usize>>,
    free: Vec<usize>,
    pattern: CholeskyPattern,
    /// First failing pivot of the rigidity probe, computed on first assembly.
    rigidity: OnceLock<Option<usize>>,
}

/// Eigenvalue floor of the unit-diagonal-scaled unit-stiffness matrix below
/// which the lattice counts as a mechanism.
const RIGIDITY_FLOOR: f64 = 1e-11;

impl TrussModel {
    pub fn new(lattice: Lattice) -> Self {
        let mut reduced = vec![None; lattice.num_dofs()];
        let mut free = Vec::new();
        for (d, slot) in reduced.iter_mut().enumerate() {
            if !lattice.is_fixed(d) {
                *slot = Some(free.len());
                free.push(d);
            }
        }
        let ones = vec![1.0; lattice.num_members()];
        let probe = assemble_matrix(&lattice, &reduced, free.len(), &ones, &ones);
        let pattern = CholeskyPattern::analyze(&probe);
        Self {
            lattice,
            reduced,
            free,
            pattern,
            rigidity: OnceLock::new(),
        }
    }

    /// Whether the supported lattice is free of mechanisms.
    ///
    /// The kernel of `K` does not depend on the (positive) member stiffnesses,
    /// so one factorisation of the unit-stiffness matrix, scaled to a unit
    /// diagonal and shifted down by a small floor, decides it for all designs.
    /// Rounding hides exact singularity from a plain Cholesky; the shift does not.
    pub fn check_rigidity(&self) -> Result<()> {
        let failed = *self.rigidity.get_or_init(|| {
            let ones = vec![1.0; self.lattice.num_members()];
            let k = assemble_matrix(&self.lattice, &self.reduced, self.free.len(), &ones, &ones);
            let diag = k.diagonal();
            if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
                return Some(i);
            }
            let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
            let shifted = k
                .scale(Some(&inv), Some(&inv))
                .add_diagonal(&vec![-RIGIDITY_FLOOR; diag.len()]);
            Cholesky::factorize(&shifted).err()
        });
        match failed {
            Some(pivot) => Err(Error::Mechanism { pivot }),
            None => Ok(()),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// Load vector restricted to free DOFs (loads on fixed DOFs become reactions).
    pub fn reduced_loads(&self) -> Vec<f64> {
        let full = self.lattice.load_vector();
        self.reduce(&full)
    }

    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.lattice.num_dofs()];
        for (&d, &v) in self.free.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }

    /// Stiffness matrix over free DOFs without factorising it.
    pub fn stiffness_matrix(&self, young: &[f64], area: &[f64]) -> Result<CsrMatrix> {
        let n = self.lattice.num_members();
        if young.len() != n || area.len() != n {
            return Err(invalid("member state length differs from member count"));
        }
        if let Some(e) = (0..n).find(|&e| !(young[e] > 0.0 && area[e] > 0.0)) {
            return Err(invalid(format!(
                "member {e} has non-positive stiffness (E = {}, A = {})",
                young[e], area[e]
            )));
        }
        Ok(assemble_matrix(&self.lattice, &self.reduced, self.free.len(), young, area))
    }

    /// Assembles and factorises `K(E, A)`.
    pub fn assemble(self: &Arc<Self>, young: &[f64], area: &[f64]) -> Result<StiffnessSystem> {
        let matrix = self.stiffness_matrix(young, area)?;
        self.check_rigidity()?;
        let factor = Cholesky::factorize_with(&self.pattern, &matrix)
            .map_err(|pivot| Error::Mechanism { pivot })?;
        Ok(StiffnessSystem {
            model: Arc::clone(self),
            matrix,
            factor,
        })
    }

    /// Member elongation `t · (u_b − u_a)` from a full-length displacement vector.
    pub fn elongation(&self, member: usize, u_full: &[f64]) -> f64 {
        let m = &self.lattice.members()[member];
        let d = self.lattice.dim();
        let [a, b] = m.joints;
        (0..d)
            .map(|k| m.tangent[k] * (u_full[b * d + k] - u_full[a * d + k]))
            .sum()
    }

    pub fn elongations(&self, u_full: &[f64]) -> Vec<f64> {
        (0..self.lattice.num_members())
            .map(|e| self.elongation(e, u_full))
            .collect()
    }

    /// `out += c · B_e x` for full-length vectors, `B_e` the member's base block.
    pub fn add_member_action(&self, member: usize, c: f64, x_full: &[f64], out: &mut [f64]) {
        let m = &self.lattice.members()[member];
        let d = self.lattice.dim();
        let [a, b] = m.joints;
        let delta = c * self.elongation(member, x_full);
        for k in 0..d {
            out[b * d + k] += delta * m.tangent[k];
            out[a * d + k] -= delta * m.tangent[k];
        }
    }
}

fn assemble_matrix(
    lattice: &Lattice,
    reduced: &[Option<usize>],
    nfree: usize,
    young: &[f64],
    area: &[f64],
) -> CsrMatrix {
    let d = lattice.dim();
    let mut trips = Vec::with_capacity(lattice.num_members() * 4 * d * d);
    for (e, m) in lattice.members().iter().enumerate() {
        let k = young[e] * area[e] / m.length;
        let dofs: Vec<Option<usize>> = m
            .joints
            .iter()
            .flat_map(|&j| (0..d).map(move |c| j * d + c))
            .map(|g| reduced[g])
            .collect();
        let block = base_block(&m.tangent);
        for (p, rp) in dofs.iter().enumerate() {
            let Some(i) = rp else { continue };
            for (q, rq) in dofs.iter().enumerate() {
                let Some(j) = rq else { continue };
                trips.push((*i, *j, k * block[p][q]));
            }
        }
    }
    CsrMatrix::from_triplets(nfree, nfree, &trips)
}

/// Convenience wrapper: builds a model for `lattice` and assembles it once.
pub fn assemble(lattice: &Lattice, young: &[f64], area: &[f64]) -> Result<StiffnessSystem> {
    Arc::new(TrussModel::new(lattice.clone())).assemble(young, area)
}

/// Factorised reduced stiffness matrix.
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    model: Arc<TrussModel>,
    matrix: CsrMatrix,
    factor: Cholesky,
}

impl StiffnessSystem {
    pub fn model(&self) -> &TrussModel {
        &self.model
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves `K u = f` over free DOFs.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        self.factor.solve(f)
    }

    /// Solves with a full-length right-hand side; returns full-length `u` with
    /// zeros at fixed DOFs.
    pub fn solve_full(&self, f_full: &[f64]) -> Vec<f64> {
        let u = self.solve(&self.model.reduce(f_full));
        self.model.expand(&u)
    }

    /// `‖K u − f‖ / ‖f‖` for reduced vectors.
    pub fn relative_residual(&self, u: &[f64], f: &[f64]) -> f64 {
        let ku = self.matrix.mul_vec(u);
        let diff: Vec<f64> = ku.iter().zip(f).map(|(a, b)| a - b).collect();
        let r = norm(&diff);
        let nf = norm(f);
        if nf == 0.0 {
            r
        } else {
            r / nf
        }
    }
}

/// `J = f · u`.
pub fn compliance(f: &[f64], u: &[f64]) -> f64 {
    dot(f, u)
}
