//! Pin-jointed lattice geometry and topology.

mod adjoint;
mod generators;

pub use adjoint::AdjointLattice;
pub use generators::{build_bcc_lattice, build_grid_lattice, BccComposer, CellBox, Diagonals, Hole};

use std::collections::{BTreeMap, HashSet};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub position: Vec<f64>,
    /// Constrained local DOFs, sorted and unique.
    pub fixed_dofs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub joints: [usize; 2],
    pub length: f64,
    pub tangent: Vec<f64>,
    pub centroid: Vec<f64>,
}

/// Length, unit tangent (from `a` to `b`) and midpoint of a straight member.
pub fn compute_member_geometry(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(invalid("member endpoints have different dimensions"));
    }
    let diff: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let length = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "coincident member endpoints at {a:?}"
        )));
    }
    let tangent = diff.iter().map(|x| x / length).collect();
    let centroid = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
    Ok((length, tangent, centroid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dim: usize,
    joints: Vec<Joint>,
    members: Vec<Member>,
    /// Nodal forces keyed by global DOF index `joint * dim + k`.
    loads: BTreeMap<usize, f64>,
}

impl Lattice {
    /// Builds a lattice from joint coordinates and member endpoint pairs.
    ///
    /// Rejects repeated members (two members on the same joint pair), zero
    /// length members and disconnected structures.
    pub fn new(dim: usize, positions: Vec<Vec<f64>>, connectivity: &[[usize; 2]]) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if let Some((i, p)) = positions.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(invalid(format!(
                "joint {i} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        let mut seen = HashSet::with_capacity(connectivity.len());
        let mut members = Vec::with_capacity(connectivity.len());
        for (e, &[a, b]) in connectivity.iter().enumerate() {
            if a >= positions.len() || b >= positions.len() {
                return Err(invalid(format!("member {e} references a missing joint")));
            }
            if a == b {
                return Err(invalid(format!("member {e} connects joint {a} to itself")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(invalid(format!(
                    "member {e} duplicates an existing member between joints {a} and {b}"
                )));
            }
            let (length, tangent, centroid) = compute_member_geometry(&positions[a], &positions[b])
                .map_err(|_| Error::DegenerateGeometry(format!("member {e} has zero length")))?;
            members.push(Member {
                joints: [a, b],
                length,
                tangent,
                centroid,
            });
        }
        let joints: Vec<Joint> = positions
            .into_iter()
            .map(|position| Joint {
                position,
                fixed_dofs: Vec::new(),
            })
            .collect();
        let lattice = Self {
            dim,
            joints,
            members,
            loads: BTreeMap::new(),
        };
        if !lattice.is_connected() {
            return Err(invalid("lattice graph is not connected"));
        }
        Ok(lattice)
    }

    fn is_connected(&self) -> bool {
        let n = self.joints.len();
        if n <= 1 {
            return true;
        }
        let adj = self.joint_members();
        let mut visited = vec![false; n];
        let mut stack = vec![0];
        visited[0] = true;
        let mut count = 1;
        while let Some(j) = stack.pop() {
            for &e in &adj[j] {
                let [a, b] = self.members[e].joints;
                let other = if a == j { b } else { a };
                if !visited[other] {
                    visited[other] = true;
                    count += 1;
                    stack.push(other);
                }
            }
        }
        count == n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.joints.len() * self.dim
    }

    pub fn dof(&self, joint: usize, k: usize) -> usize {
        joint * self.dim + k
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.length).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.members.iter().map(|m| m.length).sum()
    }

    pub fn loads(&self) -> &BTreeMap<usize, f64> {
        &self.loads
    }

    /// Members incident to each joint.
    pub fn joint_members(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.joints.len()];
        for (e, m) in self.members.iter().enumerate() {
            adj[m.joints[0]].push(e);
            adj[m.joints[1]].push(e);
        }
        adj
    }

    pub fn fix_dof(&mut self, joint: usize, k: usize) -> Result<()> {
        if joint >= self.joints.len() || k >= self.dim {
            return Err(invalid(format!("cannot fix dof {k} of joint {joint}")));
        }
        let fixed = &mut self.joints[joint].fixed_dofs;
        if let Err(pos) = fixed.binary_search(&k) {
            fixed.insert(pos, k);
        }
        Ok(())
    }

    pub fn fix_joint(&mut self, joint: usize) -> Result<()> {
        (0..self.dim).try_for_each(|k| self.fix_dof(joint, k))
    }

    /// Adds `force` (one component per axis) to the load vector at `joint`.
    pub fn add_load(&mut self, joint: usize, force: &[f64]) -> Result<()> {
        if joint >= self.joints.len() || force.len() != self.dim {
            return Err(invalid(format!("invalid load on joint {joint}")));
        }
        for (k, &f) in force.iter().enumerate() {
            if f != 0.0 {
                *self.loads.entry(joint * self.dim + k).or_insert(0.0) += f;
            }
        }
        Ok(())
    }

    pub fn clear_loads(&mut self) {
        self.loads.clear();
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.joints[dof / self.dim]
            .fixed_dofs
            .binary_search(&(dof % self.dim))
            .is_ok()
    }

    /// Full-length load vector over all DOFs.
    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.num_dofs()];
        for (&d, &v) in &self.loads {
            f[d] = v;
        }
        f
    }

    /// Same lattice with every load multiplied by `c`.
    pub fn with_scaled_loads(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in out.loads.values_mut() {
            *v *= c;
        }
        out
    }

    /// Indices of joints whose position satisfies `pred`.
    pub fn select_joints(&self, pred: impl Fn(&[f64]) -> bool) -> Vec<usize> {
        self.joints
            .iter()
            .enumerate()
            .filter(|(_, j)| pred(&j.position))
            .map(|(i, _)| i)
            .collect()
    }

    /// Axis-aligned bounding box `(min, max)` of the joint positions.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for j in &self.joints {
            for k in 0..self.dim {
                lo[k] = lo[k].min(j.position[k]);
                hi[k] = hi[k].max(j.position[k]);
            }
        }
        (lo, hi)
    }
}
