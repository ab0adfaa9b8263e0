use std::collections::HashMap;

use crate::error::{invalid, Result};
use crate::lattice::Lattice;
use crate::sparse::CsrMatrix;

/// Cone-kernel density filter over member centroids, weighted by `1/l`.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    radius: f64,
    weights: CsrMatrix,
    transposed: CsrMatrix,
}

impl FilterOperator {
    pub fn identity(n: usize) -> Self {
        Self {
            radius: 0.0,
            weights: CsrMatrix::identity(n),
            transposed: CsrMatrix::identity(n),
        }
    }

    /// `W_ei = (w_ei/l_i) / Σ_k (w_ek/l_k)` with `w_ei = max(0, R − ‖c_e − c_i‖)`.
    pub fn build(lattice: &Lattice, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(invalid("filter radius must be finite and non-negative"));
        }
        let n = lattice.num_members();
        if radius == 0.0 {
            return Ok(Self::identity(n));
        }
        let members = lattice.members();
        let dim = lattice.dim();
        let cell_of = |c: &[f64]| -> [i64; 3] {
            let mut k = [0i64; 3];
            for (slot, x) in k.iter_mut().zip(c) {
                *slot = (x / radius).floor() as i64;
            }
            k
        };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (e, m) in members.iter().enumerate() {
            buckets.entry(cell_of(&m.centroid)).or_default().push(e);
        }
        let reach: Vec<i64> = (0..3).map(|k| if k < dim { 1 } else { 0 }).collect();

        let mut trips = Vec::new();
        let mut row = Vec::new();
        for (e, m) in members.iter().enumerate() {
            row.clear();
            let base = cell_of(&m.centroid);
            for dx in -reach[0]..=reach[0] {
                for dy in -reach[1]..=reach[1] {
                    for dz in -reach[2]..=reach[2] {
                        let key = [base[0] + dx, base[1] + dy, base[2] + dz];
                        let Some(list) = buckets.get(&key) else { continue };
                        for &i in list {
                            let dist = m
                                .centroid
                                .iter()
                                .zip(&members[i].centroid)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                .sqrt();
                            let w = radius - dist;
                            if w > 0.0 {
                                row.push((i, w / members[i].length));
                            }
                        }
                    }
                }
            }
            let total: f64 = row.iter().map(|r| r.1).sum();
            trips.extend(row.iter().map(|&(i, v)| (e, i, v / total)));
        }
        let weights = CsrMatrix::from_triplets(n, n, &trips);
        let transposed = weights.transpose();
        Ok(Self {
            radius,
            weights,
            transposed,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    /// `ŝ = W s`.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        self.weights.mul_vec(s)
    }

    /// Pulls a gradient with respect to `ŝ` back to `s`: `Wᵀ g`.
    pub fn chain(&self, grad: &[f64]) -> Vec<f64> {
        self.transposed.mul_vec(grad)
    }
}
