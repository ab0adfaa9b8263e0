//! Method of Moving Asymptotes for one inequality constraint.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmaOptions {
    pub asymptote_init: f64,
    pub asymptote_decrease: f64,
    pub asymptote_increase: f64,
    pub move_limit: f64,
    pub albefa: f64,
    /// Smallest distance between an asymptote and the current iterate.
    pub asymptote_margin: f64,
    /// Regularisation added to the `p`, `q` coefficients.
    pub raa0: f64,
    /// Linear and quadratic cost of the constraint relaxation variable.
    pub c: f64,
    pub d: f64,
}

impl Default for MmaOptions {
    fn default() -> Self {
        Self {
            asymptote_init: 0.5,
            asymptote_decrease: 0.7,
            asymptote_increase: 1.2,
            move_limit: 0.2,
            albefa: 0.1,
            asymptote_margin: 1e-5,
            raa0: 1e-5,
            c: 1000.0,
            d: 1.0,
        }
    }
}

impl MmaOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.asymptote_init > 0.0
            && self.asymptote_decrease > 0.0
            && self.asymptote_decrease < 1.0
            && self.asymptote_increase > 1.0
            && self.move_limit > 0.0
            && self.move_limit <= 1.0
            && self.albefa > 0.0
            && self.albefa < 1.0
            && self.asymptote_margin > 0.0
            && self.asymptote_margin < 10.0
            && self.raa0 > 0.0
            && self.c > 0.0
            && self.d > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid MMA options {self:?}")))
        }
    }
}

/// Iterate history and asymptotes for variables in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmaState {
    pub x: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
    pub iteration: usize,
    options: MmaOptions,
}

/// Per-variable separable subproblem data.
struct Subproblem {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    p1: Vec<f64>,
    q1: Vec<f64>,
    b: f64,
    c: f64,
    d: f64,
}

impl Subproblem {
    fn x_of(&self, lambda: f64) -> Vec<f64> {
        (0..self.p0.len())
            .map(|j| {
                let p = (self.p0[j] + lambda * self.p1[j]).sqrt();
                let q = (self.q0[j] + lambda * self.q1[j]).sqrt();
                let x = (p * self.low[j] + q * self.upp[j]) / (p + q);
                x.clamp(self.alpha[j], self.beta[j])
            })
            .collect()
    }

    fn y_of(&self, lambda: f64) -> f64 {
        ((lambda - self.c) / self.d).max(0.0)
    }

    /// Constraint approximation `Σ P/(U−x) + Q/(x−L)`.
    fn g(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &x)| self.p1[j] / (self.upp[j] - x) + self.q1[j] / (x - self.low[j]))
            .sum()
    }

    /// Dual gradient `h(λ) = g(x(λ)) − y(λ) − b` and its derivative.
    fn dual_gradient(&self, lambda: f64) -> (f64, f64) {
        let x = self.x_of(lambda);
        let mut h = -self.y_of(lambda) - self.b;
        let mut dh = if lambda > self.c { -1.0 / self.d } else { 0.0 };
        for (j, &xj) in x.iter().enumerate() {
            let ux = self.upp[j] - xj;
            let xl = xj - self.low[j];
            h += self.p1[j] / ux + self.q1[j] / xl;
            if xj > self.alpha[j] && xj < self.beta[j] {
                let p = self.p0[j] + lambda * self.p1[j];
                let q = self.q0[j] + lambda * self.q1[j];
                let gx = self.p1[j] / (ux * ux) - self.q1[j] / (xl * xl);
                let curv = 2.0 * p / (ux * ux * ux) + 2.0 * q / (xl * xl * xl);
                dh -= gx * gx / curv;
            }
        }
        (h, dh)
    }

    /// Maximises the concave dual over `λ ≥ 0`.
    fn solve_dual(&self, tol: f64) -> Result<f64> {
        let (h0, _) = self.dual_gradient(0.0);
        if h0 <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.dual_gradient(hi).0 > 0.0 {
            hi *= 2.0;
            if hi > 1e30 {
                return Err(Error::OptimizationAbort("MMA dual is unbounded".into()));
            }
        }
        let mut lo = 0.0;
        let mut lambda = 0.5 * hi;
        for _ in 0..500 {
            let (h, dh) = self.dual_gradient(lambda);
            if h.abs() <= tol {
                return Ok(lambda);
            }
            if h > 0.0 {
                lo = lambda;
            } else {
                hi = lambda;
            }
            let newton = if dh < 0.0 { lambda - h / dh } else { f64::NAN };
            lambda = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * hi.max(1.0) {
                return Ok(lambda);
            }
        }
        Ok(lambda)
    }

    /// Largest violation of the subproblem KKT conditions at `(x(λ), y(λ), λ)`.
    fn kkt_residual(&self, lambda: f64) -> f64 {
        let x = self.x_of(lambda);
        let y = self.y_of(lambda);
        let h = self.g(&x) - y - self.b;
        let scale = 1.0 + self.b.abs();
        let mut r = (h.max(0.0) / scale).max((lambda * h).abs() / scale / (1.0 + lambda));
        for (j, &xj) in x.iter().enumerate() {
            let ux = self.upp[j] - xj;
            let xl = xj - self.low[j];
            let grad = (self.p0[j] + lambda * self.p1[j]) / (ux * ux)
                - (self.q0[j] + lambda * self.q1[j]) / (xl * xl);
            let gscale = (self.p0[j] + lambda * self.p1[j]) / (ux * ux)
                + (self.q0[j] + lambda * self.q1[j]) / (xl * xl);
            // projected gradient: zero in the interior, sign-constrained at bounds
            let viol = if xj <= self.alpha[j] {
                (-grad).max(0.0)
            } else if xj >= self.beta[j] {
                grad.max(0.0)
            } else {
                grad.abs()
            };
            r = r.max(viol / gscale.max(f64::MIN_POSITIVE));
        }
        r
    }
}

impl MmaState {
    pub fn new(x0: Vec<f64>, options: MmaOptions) -> Result<Self> {
        options.validate()?;
        if x0.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("MMA start point outside [0, 1]"));
        }
        let n = x0.len();
        Ok(Self {
            xold1: x0.clone(),
            xold2: x0.clone(),
            x: x0,
            low: vec![0.0; n],
            upp: vec![1.0; n],
            iteration: 0,
            options,
        })
    }

    /// One MMA update from the objective `f0`, constraint `g ≤ 0` and their gradients.
    pub fn step(&mut self, f0: f64, df0: &[f64], g: f64, dg: &[f64]) -> Result<Vec<f64>> {
        let n = self.x.len();
        if df0.len() != n || dg.len() != n {
            return Err(invalid("MMA gradient length mismatch"));
        }
        if !f0.is_finite() || !g.is_finite() || df0.iter().chain(dg).any(|v| !v.is_finite()) {
            return Err(Error::OptimizationAbort("non-finite objective or constraint".into()));
        }
        let o = self.options;
        self.iteration += 1;
        let range = 1.0;
        for j in 0..n {
            let x = self.x[j];
            if self.iteration <= 2 {
                self.low[j] = x - o.asymptote_init * range;
                self.upp[j] = x + o.asymptote_init * range;
            } else {
                let trend = (x - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if trend < 0.0 {
                    o.asymptote_decrease
                } else if trend > 0.0 {
                    o.asymptote_increase
                } else {
                    1.0
                };
                let low = x - factor * (self.xold1[j] - self.low[j]);
                let upp = x + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x - 10.0 * range, x - o.asymptote_margin * range);
                self.upp[j] = upp.clamp(x + o.asymptote_margin * range, x + 10.0 * range);
            }
        }

        let mut sub = Subproblem {
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            low: self.low.clone(),
            upp: self.upp.clone(),
            p0: vec![0.0; n],
            q0: vec![0.0; n],
            p1: vec![0.0; n],
            q1: vec![0.0; n],
            b: 0.0,
            c: o.c,
            d: o.d,
        };
        let mut b = -g;
        for j in 0..n {
            let x = self.x[j];
            sub.alpha[j] = (self.low[j] + o.albefa * (x - self.low[j]))
                .max(x - o.move_limit * range)
                .max(0.0);
            sub.beta[j] = (self.upp[j] - o.albefa * (self.upp[j] - x))
                .min(x + o.move_limit * range)
                .min(1.0);
            let ux = self.upp[j] - x;
            let xl = x - self.low[j];
            let coeffs = |df: f64| {
                let p = df.max(0.0);
                let q = (-df).max(0.0);
                let pq = 0.001 * (p + q) + o.raa0 / range;
                ((p + pq) * ux * ux, (q + pq) * xl * xl)
            };
            (sub.p0[j], sub.q0[j]) = coeffs(df0[j]);
            (sub.p1[j], sub.q1[j]) = coeffs(dg[j]);
            b += sub.p1[j] / ux + sub.q1[j] / xl;
        }
        sub.b = b;

        let tol = 1e-12 * (1.0 + b.abs());
        let lambda = sub.solve_dual(tol)?;
        let residual = sub.kkt_residual(lambda);
        if residual > 1e-8 {
            return Err(Error::OptimizationAbort(format!(
                "MMA subproblem KKT residual {residual:.3e} after dual solve"
            )));
        }
        let x_new = sub.x_of(lambda);
        self.xold2 = std::mem::replace(&mut self.xold1, std::mem::replace(&mut self.x, x_new.clone()));
        Ok(x_new)
    }
}
