use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const DEGREE: usize = 4;
const KNOTS: [f64; 11] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0];

/// Named control polygons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyPreset {
    /// Flat near zero, steep just below the threshold.
    Default,
    /// A less curved variant.
    Mild,
}

impl PenaltyPreset {
    pub fn control_points(self) -> [[f64; 2]; 6] {
        match self {
            PenaltyPreset::Default => [
                [0.0, 0.0],
                [0.1, 0.0],
                [0.2, 0.0],
                [0.3, 0.015],
                [0.42, 0.42],
                [0.5, 0.5],
            ],
            PenaltyPreset::Mild => [
                [0.0, 0.0],
                [0.1, 0.02],
                [0.2, 0.06],
                [0.3, 0.15],
                [0.42, 0.42],
                [0.5, 0.5],
            ],
        }
    }
}

/// Clamped quartic B-spline on `[0, s*]` joined to the identity on `[s*, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizationCurve {
    control: [[f64; 2]; 6],
    /// Control points of the derivative curve (degree 3).
    derivative: [[f64; 2]; 5],
}

fn de_boor<const N: usize>(points: &[[f64; 2]; N], knots: &[f64], degree: usize, u: f64) -> [f64; 2] {
    // span k with knots[k] <= u < knots[k+1], clamped to the last non-empty span
    let mut k = degree;
    while k + 1 < N && u >= knots[k + 1] {
        k += 1;
    }
    let mut d: Vec<[f64; 2]> = (0..=degree).map(|j| points[j + k - degree]).collect();
    for r in 1..=degree {
        for j in (r..=degree).rev() {
            let i = j + k - degree;
            let den = knots[i + degree + 1 - r] - knots[i];
            let a = if den > 0.0 { (u - knots[i]) / den } else { 0.0 };
            d[j] = [
                (1.0 - a) * d[j - 1][0] + a * d[j][0],
                (1.0 - a) * d[j - 1][1] + a * d[j][1],
            ];
        }
    }
    d[degree]
}

impl PenalizationCurve {
    pub fn from_preset(preset: PenaltyPreset) -> Self {
        Self::new(preset.control_points()).expect("built-in penalty presets are valid")
    }

    /// Validates endpoint interpolation, C¹ joining at `s*` and monotonicity.
    pub fn new(control: [[f64; 2]; 6]) -> Result<Self> {
        if control.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("penalty control points must be finite"));
        }
        if control[0] != [0.0, 0.0] {
            return Err(invalid("penalty curve must start at (0, 0)"));
        }
        let [sx, sy] = control[5];
        if !(sx > 0.0 && sx < 1.0) || (sy - sx).abs() > 1e-12 {
            return Err(invalid("penalty curve must end on the identity at s* in (0, 1)"));
        }
        let mut derivative = [[0.0; 2]; 5];
        for i in 0..5 {
            let f = DEGREE as f64 / (KNOTS[i + DEGREE + 1] - KNOTS[i + 1]);
            derivative[i] = [
                f * (control[i + 1][0] - control[i][0]),
                f * (control[i + 1][1] - control[i][1]),
            ];
        }
        let curve = Self { control, derivative };

        let end = derivative[4];
        if !(end[0] > 0.0) || (end[1] / end[0] - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "penalty curve is not C¹ at s*: end slope {} instead of 1",
                end[1] / end[0]
            )));
        }
        for k in 0..=10_000 {
            let u = k as f64 / 10_000.0;
            let [dx, dy] = curve.tangent(u);
            if !(dx > 0.0) {
                return Err(invalid("penalty curve x(u) must be strictly increasing"));
            }
            if dy < -1e-14 {
                return Err(invalid("penalty curve must be monotone non-decreasing"));
            }
            let [_, y] = curve.point(u);
            if !(-1e-14..=sx + 1e-14).contains(&y) {
                return Err(invalid("penalty curve leaves [0, s*]"));
            }
        }
        Ok(curve)
    }

    pub fn control_points(&self) -> &[[f64; 2]; 6] {
        &self.control
    }

    pub fn threshold(&self) -> f64 {
        self.control[5][0]
    }

    fn point(&self, u: f64) -> [f64; 2] {
        de_boor(&self.control, &KNOTS, DEGREE, u)
    }

    fn tangent(&self, u: f64) -> [f64; 2] {
        de_boor(&self.derivative, &KNOTS[1..10], DEGREE - 1, u)
    }

    /// Parameter `u` with `x(u) = s`, by Newton steps kept inside a bisection bracket.
    fn parameter(&self, s: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut u = s / self.threshold();
        for _ in 0..100 {
            let fx = self.point(u)[0] - s;
            if fx.abs() <= 1e-15 {
                break;
            }
            if fx > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let next = u - fx / self.tangent(u)[0];
            u = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 {
                break;
            }
        }
        u
    }

    /// `(s̃, ds̃/dŝ)` at `s ∈ [0, 1]`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        if s >= self.threshold() {
            return (s, 1.0);
        }
        if s <= 0.0 {
            let [dx, dy] = self.tangent(0.0);
            return (0.0, dy / dx);
        }
        let u = self.parameter(s);
        let [dx, dy] = self.tangent(u);
        (self.point(u)[1], dy / dx)
    }

    pub fn penalize(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut values = Vec::with_capacity(s.len());
        let mut slopes = Vec::with_capacity(s.len());
        for &x in s {
            if !(-1e-12..=1.0 + 1e-12).contains(&x) {
                return Err(invalid(format!("density {x} outside [0, 1]")));
            }
            let (v, d) = self.eval(x.clamp(0.0, 1.0));
            values.push(v);
            slopes.push(d);
        }
        Ok((values, slopes))
    }
}
