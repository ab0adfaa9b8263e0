//! Lattice JSON, legacy VTK and Matrix Market files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::Lattice;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub joint: usize,
    pub force: Vec<f64>,
}

/// On-disk lattice: coordinates, connectivity, supports, loads and optional
/// per-member data columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFile {
    pub dimension: usize,
    pub joints: Vec<Vec<f64>>,
    pub members: Vec<[usize; 2]>,
    /// `[joint, dof]` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loads: Vec<LoadEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub member_data: BTreeMap<String, Vec<f64>>,
}

impl LatticeFile {
    pub fn from_lattice(lattice: &Lattice) -> Self {
        let d = lattice.dim();
        let fixed = lattice
            .joints()
            .iter()
            .enumerate()
            .flat_map(|(j, joint)| joint.fixed_dofs.iter().map(move |&k| [j, k]))
            .collect();
        let mut loads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&dof, &v) in lattice.loads() {
            loads.entry(dof / d).or_insert_with(|| vec![0.0; d])[dof % d] = v;
        }
        Self {
            dimension: d,
            joints: lattice.joints().iter().map(|j| j.position.clone()).collect(),
            members: lattice.members().iter().map(|m| m.joints).collect(),
            fixed,
            loads: loads
                .into_iter()
                .map(|(joint, force)| LoadEntry { joint, force })
                .collect(),
            member_data: BTreeMap::new(),
        }
    }

    pub fn with_member_data(mut self, name: &str, values: Vec<f64>) -> Self {
        self.member_data.insert(name.to_string(), values);
        self
    }

    pub fn to_lattice(&self) -> Result<Lattice> {
        let mut lattice = Lattice::new(self.dimension, self.joints.clone(), &self.members)?;
        for &[j, k] in &self.fixed {
            lattice.fix_dof(j, k)?;
        }
        for l in &self.loads {
            lattice.add_load(l.joint, &l.force)?;
        }
        let n = lattice.num_members();
        if let Some((name, _)) = self.member_data.iter().find(|(_, v)| v.len() != n) {
            return Err(invalid(format!("member data `{name}` does not have {n} entries")));
        }
        Ok(lattice)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Legacy ASCII VTK POLYDATA: joints as points, members as lines, one
/// `CELL_DATA` scalar array per entry of `cell_data`.
pub fn vtk_polydata(lattice: &Lattice, title: &str, cell_data: &[(&str, &[f64])]) -> Result<String> {
    let n = lattice.num_members();
    if let Some((name, _)) = cell_data.iter().find(|(_, v)| v.len() != n) {
        return Err(invalid(format!("cell array `{name}` does not have {n} entries")));
    }
    if let Some((name, _)) = cell_data
        .iter()
        .find(|(name, _)| name.is_empty() || name.chars().any(char::is_whitespace))
    {
        return Err(invalid(format!("VTK array name `{name}` must be non-empty without spaces")));
    }
    let title = title.lines().next().unwrap_or("").chars().take(255).collect::<String>();
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0").unwrap();
    writeln!(out, "{title}").unwrap();
    writeln!(out, "ASCII\nDATASET POLYDATA").unwrap();
    writeln!(out, "POINTS {} double", lattice.num_joints()).unwrap();
    for j in lattice.joints() {
        let mut p = [0.0; 3];
        p[..j.position.len()].copy_from_slice(&j.position);
        writeln!(out, "{:e} {:e} {:e}", p[0], p[1], p[2]).unwrap();
    }
    writeln!(out, "LINES {n} {}", 3 * n).unwrap();
    for m in lattice.members() {
        writeln!(out, "2 {} {}", m.joints[0], m.joints[1]).unwrap();
    }
    if !cell_data.is_empty() {
        writeln!(out, "CELL_DATA {n}").unwrap();
        for (name, values) in cell_data {
            writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in *values {
                writeln!(out, "{v:e}").unwrap();
            }
        }
    }
    Ok(out)
}

/// Coordinate-format Matrix Market text; symmetric matrices store the lower triangle.
pub fn matrix_market(a: &CsrMatrix, symmetric: bool) -> String {
    let entries: Vec<(usize, usize, f64)> = a
        .triplets()
        .filter(|&(i, j, _)| !symmetric || j <= i)
        .collect();
    let kind = if symmetric { "symmetric" } else { "general" };
    let mut out = format!("%%MatrixMarket matrix coordinate real {kind}\n");
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), entries.len()).unwrap();
    for (i, j, v) in entries {
        writeln!(out, "{} {} {v:e}", i + 1, j + 1).unwrap();
    }
    out
}
