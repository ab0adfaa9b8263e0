//! Design-variable pipeline: raw densities → filter → penalisation → areas.

mod filter;
mod penalty;

pub use filter::FilterOperator;
pub use penalty::{PenalizationCurve, PenaltyPreset};

use crate::error::{invalid, Result};
use crate::lattice::Lattice;

/// Raw, filtered and penalised densities with the resulting areas.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
    pub penalized: Vec<f64>,
    /// `ds̃/dŝ` per member.
    pub slope: Vec<f64>,
    pub areas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DesignMap {
    filter: FilterOperator,
    penalty: Option<PenalizationCurve>,
    lengths: Vec<f64>,
    area_min: f64,
    area_max: f64,
}

impl DesignMap {
    pub fn new(
        lattice: &Lattice,
        filter_radius: f64,
        penalty: Option<PenalizationCurve>,
        area_min: f64,
        area_max: f64,
    ) -> Result<Self> {
        if !(area_min > 0.0 && area_max > area_min && area_max.is_finite()) {
            return Err(invalid(format!(
                "area bounds need 0 < A_min < A_max (got {area_min}, {area_max})"
            )));
        }
        Ok(Self {
            filter: FilterOperator::build(lattice, filter_radius)?,
            penalty,
            lengths: lattice.lengths(),
            area_min,
            area_max,
        })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn filter(&self) -> &FilterOperator {
        &self.filter
    }

    pub fn penalty(&self) -> Option<&PenalizationCurve> {
        self.penalty.as_ref()
    }

    pub fn area_bounds(&self) -> (f64, f64) {
        (self.area_min, self.area_max)
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// `A_e = A_min + s̃(ŝ_e) (A_max − A_min)`.
    pub fn areas_from_design(&self, s: &[f64]) -> Result<DesignState> {
        if s.len() != self.len() {
            return Err(invalid("design vector length differs from member count"));
        }
        if let Some(x) = s.iter().find(|x| !(-1e-12..=1.0 + 1e-12).contains(*x)) {
            return Err(invalid(format!("design variable {x} outside [0, 1]")));
        }
        let filtered = self.filter.apply(s);
        let (penalized, slope) = match &self.penalty {
            Some(c) => c.penalize(&filtered)?,
            None => (filtered.clone(), vec![1.0; filtered.len()]),
        };
        let span = self.area_max - self.area_min;
        let areas = penalized.iter().map(|p| self.area_min + p * span).collect();
        Ok(DesignState {
            raw: s.to_vec(),
            filtered,
            penalized,
            slope,
            areas,
        })
    }

    /// `dA_e/dŝ_e`, the local part of the chain before the filter transpose.
    pub fn area_slope(&self, state: &DesignState) -> Vec<f64> {
        let span = self.area_max - self.area_min;
        state.slope.iter().map(|d| d * span).collect()
    }

    /// Converts `∂f/∂A` into `∂f/∂s` through penalisation and filter.
    pub fn chain(&self, state: &DesignState, grad_area: &[f64]) -> Vec<f64> {
        let local: Vec<f64> = grad_area
            .iter()
            .zip(self.area_slope(state))
            .map(|(g, d)| g * d)
            .collect();
        self.filter.chain(&local)
    }

    pub fn volume(&self, state: &DesignState) -> f64 {
        self.lengths.iter().zip(&state.areas).map(|(l, a)| l * a).sum()
    }

    pub fn volume_gradient(&self, state: &DesignState) -> Vec<f64> {
        self.chain(state, &self.lengths)
    }

    /// Uniform raw density giving volume `target`, found by bisection on the
    /// monotone map `c ↦ V(c·1)`.
    pub fn uniform_design_for_volume(&self, target: f64) -> Result<Vec<f64>> {
        let n = self.len();
        let vol = |c: f64| -> Result<f64> { Ok(self.volume(&self.areas_from_design(&vec![c; n])?)) };
        let (vmin, vmax) = (vol(0.0)?, vol(1.0)?);
        if !(target > vmin) {
            return Err(invalid(format!(
                "V_max = {target} is not above the minimum volume {vmin}"
            )));
        }
        if target >= vmax {
            return Ok(vec![1.0; n]);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if vol(mid)? > target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(vec![lo; n])
    }
}
