use crate::error::{Error, Result};
use crate::lattice::AdjointLattice;
use crate::sparse::CsrMatrix;

/// Linear finite element operators on the adjoint lattice.
#[derive(Debug, Clone)]
pub struct AdjointOperators {
    /// Lumped mass, `h/2` from every incident edge.
    pub mass: Vec<f64>,
    /// Edge stiffness `(1/h) [1 −1; −1 1]` summed over edges.
    pub stiffness: CsrMatrix,
}

pub fn assemble_adjoint_operators(adjoint: &AdjointLattice) -> Result<AdjointOperators> {
    let n = adjoint.num_vertices();
    let mut mass = vec![0.0; n];
    let mut trips = Vec::with_capacity(4 * adjoint.num_edges());
    for &(a, b, h) in &adjoint.edges {
        mass[a] += 0.5 * h;
        mass[b] += 0.5 * h;
        let k = 1.0 / h;
        trips.extend([(a, a, k), (b, b, k), (a, b, -k), (b, a, -k)]);
    }
    if let Some(i) = mass.iter().position(|&m| m <= 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "member {i} shares no joint with another member, so the field has no support there"
        )));
    }
    Ok(AdjointOperators {
        mass,
        stiffness: CsrMatrix::from_triplets(n, n, &trips),
    })
}
