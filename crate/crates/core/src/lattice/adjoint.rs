use super::Lattice;
use crate::error::{invalid, Error, Result};

/// Line graph of a lattice embedded at the member centroids.
///
/// Vertex `e` is member `e` of the source lattice; an edge joins two members
/// that share a joint.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointLattice {
    pub positions: Vec<Vec<f64>>,
    /// `(a, b, h)` with `a < b` and `h` the centroid distance.
    pub edges: Vec<(usize, usize, f64)>,
}

impl AdjointLattice {
    pub fn build(lattice: &Lattice) -> Result<Self> {
        if lattice.num_members() == 0 {
            return Err(invalid("adjoint lattice needs at least one member"));
        }
        let positions: Vec<Vec<f64>> = lattice.members().iter().map(|m| m.centroid.clone()).collect();
        let mut edges = Vec::new();
        for (j, incident) in lattice.joint_members().iter().enumerate() {
            for (p, &a) in incident.iter().enumerate() {
                for &b in &incident[p + 1..] {
                    let h = positions[a]
                        .iter()
                        .zip(&positions[b])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    if !(h > 0.0) {
                        return Err(Error::DegenerateGeometry(format!(
                            "members {a} and {b} at joint {j} have coincident centroids"
                        )));
                    }
                    edges.push((a.min(b), a.max(b), h));
                }
            }
        }
        edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        Ok(Self { positions, edges })
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}
