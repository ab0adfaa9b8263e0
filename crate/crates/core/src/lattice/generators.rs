//! Parametric lattice generators.
//!
//! Joints are keyed by integer grid coordinates (BCC centres at doubled
//! coordinates), so deduplication never compares floating-point positions.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagonals {
    None,
    Single,
    Double,
}

/// Regular planar grid of `nx` by `ny` cells.
pub fn build_grid_lattice(
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    diagonals: Diagonals,
) -> Result<Lattice> {
    if nx == 0 || ny == 0 {
        return Err(invalid("grid cell counts must be at least 1"));
    }
    if !(cell_w > 0.0 && cell_h > 0.0 && cell_w.is_finite() && cell_h.is_finite()) {
        return Err(invalid("grid cell dimensions must be positive"));
    }
    let id = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut positions = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            positions.push(vec![ix as f64 * cell_w, iy as f64 * cell_h]);
        }
    }
    let mut members = Vec::new();
    for iy in 0..=ny {
        for ix in 0..nx {
            members.push([id(ix, iy), id(ix + 1, iy)]);
        }
    }
    for ix in 0..=nx {
        for iy in 0..ny {
            members.push([id(ix, iy), id(ix, iy + 1)]);
        }
    }
    if diagonals != Diagonals::None {
        for iy in 0..ny {
            for ix in 0..nx {
                members.push([id(ix, iy), id(ix + 1, iy + 1)]);
                if diagonals == Diagonals::Double {
                    members.push([id(ix + 1, iy), id(ix, iy + 1)]);
                }
            }
        }
    }
    Lattice::new(2, positions, &members)
}

/// Block of BCC cells with integer indices in `[min, max)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellBox {
    pub min: [i64; 3],
    pub max: [i64; 3],
}

/// Cylindrical hole along `axis`; cells whose centre lies inside are dropped.
/// `center` holds the two remaining world coordinates in increasing axis order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    pub axis: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

impl Hole {
    fn contains(&self, p: [f64; 3]) -> bool {
        let (a, b) = match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let da = p[a] - self.center[0];
        let db = p[b] - self.center[1];
        da * da + db * db < self.radius * self.radius
    }
}

/// Composes body-centred cubic lattices from unions of cell boxes minus holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BccComposer {
    pub cell: f64,
    pub boxes: Vec<CellBox>,
    #[serde(default)]
    pub holes: Vec<Hole>,
    /// Include the twelve cube-edge members of every cell.
    #[serde(default = "default_true")]
    pub edges: bool,
}

fn default_true() -> bool {
    true
}

impl BccComposer {
    pub fn cells(&self) -> BTreeSet<[i64; 3]> {
        let mut cells = BTreeSet::new();
        for b in &self.boxes {
            for i in b.min[0]..b.max[0] {
                for j in b.min[1]..b.max[1] {
                    for k in b.min[2]..b.max[2] {
                        let c = [i, j, k];
                        let centre = c.map(|x| (x as f64 + 0.5) * self.cell);
                        if !self.holes.iter().any(|h| h.contains(centre)) {
                            cells.insert(c);
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn build(&self) -> Result<Lattice> {
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(invalid("BCC cell size must be positive"));
        }
        if self.holes.iter().any(|h| h.axis > 2 || !(h.radius > 0.0)) {
            return Err(invalid("hole axis must be 0..=2 with a positive radius"));
        }
        let cells = self.cells();
        if cells.is_empty() {
            return Err(invalid("BCC composition contains no cells"));
        }

        let mut index: HashMap<[i64; 3], usize> = HashMap::new();
        let mut positions = Vec::new();
        let mut joint = |key: [i64; 3], positions: &mut Vec<Vec<f64>>| -> usize {
            *index.entry(key).or_insert_with(|| {
                positions.push(key.iter().map(|&x| x as f64 * 0.5 * self.cell).collect());
                positions.len() - 1
            })
        };
        let mut seen = HashSet::new();
        let mut members = Vec::new();
        let mut push = |a: usize, b: usize, members: &mut Vec<[usize; 2]>| {
            if seen.insert((a.min(b), a.max(b))) {
                members.push([a, b]);
            }
        };

        for c in &cells {
            let base = c.map(|x| 2 * x);
            let centre = joint(base.map(|x| x + 1), &mut positions);
            let mut corner = [0usize; 8];
            for (n, slot) in corner.iter_mut().enumerate() {
                let d = [(n & 1) as i64, ((n >> 1) & 1) as i64, ((n >> 2) & 1) as i64];
                *slot = joint(
                    [base[0] + 2 * d[0], base[1] + 2 * d[1], base[2] + 2 * d[2]],
                    &mut positions,
                );
            }
            for &k in &corner {
                push(centre, k, &mut members);
            }
            if self.edges {
                for n in 0..8 {
                    for bit in [1usize, 2, 4] {
                        if n & bit == 0 {
                            push(corner[n], corner[n | bit], &mut members);
                        }
                    }
                }
            }
        }
        Lattice::new(3, positions, &members)
    }
}

/// Block of `nx × ny × nz` BCC cells with cube edges.
pub fn build_bcc_lattice(nx: usize, ny: usize, nz: usize, cell: f64) -> Result<Lattice> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(invalid("BCC cell counts must be at least 1"));
    }
    BccComposer {
        cell,
        boxes: vec![CellBox {
            min: [0, 0, 0],
            max: [nx as i64, ny as i64, nz as i64],
        }],
        holes: Vec::new(),
        edges: true,
    }
    .build()
}
