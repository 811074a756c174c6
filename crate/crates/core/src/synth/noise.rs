use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::NoiseFamily;
use crate::error::{Error, Result};

/// Per-node exogenous noise. `scales[i]` is the standard deviation of node
/// `i`'s noise for every family: Uniform is supported on
/// `[-sqrt(3) s, sqrt(3) s]` and Laplace has diversity `s / sqrt(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub scales: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, scales: Vec<f64>) -> Result<Self> {
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Structural(format!("noise scale {s} is not positive")));
        }
        Ok(NoiseSpec { family, scales })
    }

    pub fn draw<R: Rng + ?Sized>(&self, node: usize, rng: &mut R) -> f64 {
        draw_standardized(self.family, rng) * self.scales[node]
    }

    /// Analytic CDF of node `node`'s noise.
    pub fn cdf(&self, node: usize, x: f64) -> f64 {
        let s = self.scales[node];
        match self.family {
            NoiseFamily::Gaussian => normal_cdf(x / s),
            NoiseFamily::Uniform => {
                let h = 3f64.sqrt() * s;
                ((x + h) / (2.0 * h)).clamp(0.0, 1.0)
            }
            NoiseFamily::Laplace => {
                let b = s / std::f64::consts::SQRT_2;
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    1.0 - 0.5 * (-x / b).exp()
                }
            }
        }
    }
}

/// A zero-mean, unit-variance draw from `family`.
fn draw_standardized<R: Rng + ?Sized>(family: NoiseFamily, rng: &mut R) -> f64 {
    match family {
        NoiseFamily::Gaussian => rng.sample(StandardNormal),
        NoiseFamily::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
        NoiseFamily::Laplace => {
            let u: f64 = rng.random::<f64>() - 0.5;
            let b = std::f64::consts::FRAC_1_SQRT_2;
            -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}
