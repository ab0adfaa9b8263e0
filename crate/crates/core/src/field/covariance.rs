use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// A Gaussian distribution over member Young's moduli.
pub trait Covariance: Send + Sync {
    fn dim(&self) -> usize;

    fn mean(&self) -> &[f64];

    /// Covariance-vector product `C x`.
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// One realisation of the moduli.
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Independent moduli with a common standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct UncorrelatedField {
    mean: Vec<f64>,
    sigma: f64,
}

impl UncorrelatedField {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("standard deviation must be finite and non-negative"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Covariance for UncorrelatedField {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(invalid("covariance: vector length differs from field size"));
        }
        let s2 = self.sigma * self.sigma;
        Ok(x.iter().map(|v| s2 * v).collect())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.mean
            .iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                m + self.sigma * z
            })
            .collect()
    }
}
