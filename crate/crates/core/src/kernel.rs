use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic squared-exponential covariance
/// `k(x, x') = σ_f² · exp(-|x - x'|² / (2ℓ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub signal_variance: f64,
    pub lengthscale: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            lengthscale: 1.0,
        }
    }
}

impl Kernel {
    pub fn new(signal_variance: f64, lengthscale: f64) -> Result<Self> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::InvalidInput(format!("signal variance {signal_variance}")));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidInput(format!("lengthscale {lengthscale}")));
        }
        Ok(Self {
            signal_variance,
            lengthscale,
        })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }

    pub fn gram(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_variance;
            for j in 0..i {
                let v = self.eval(&xs[i], &xs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn cross(&self, xs: &[Vec<f64>], x: &[f64]) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(xs.len(), xs.iter().map(|xi| self.eval(xi, x)))
    }
}
