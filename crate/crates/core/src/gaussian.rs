//! Gaussian algebra used by the EP updates: products and quotients of
//! univariate Gaussians, bivariate conditioning, and the moments of a
//! Gaussian tilted by a probit factor.
//!
//! Quotients are allowed to produce improper (negative or infinite variance)
//! results. Those are legitimate intermediate values of a cavity computation
//! and are flagged through [`Gaussian1D::is_proper`] instead of failing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    /// Build from precision `τ = 1/σ²` and precision-mean `ν = μ/σ²`.
    pub fn from_natural(precision: f64, precision_mean: f64) -> Self {
        if precision == 0.0 && precision_mean == 0.0 {
            // flat factor
            return Self {
                mean: 0.0,
                variance: f64::INFINITY,
            };
        }
        Self {
            mean: precision_mean / precision,
            variance: 1.0 / precision,
        }
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.variance
    }

    pub fn precision_mean(&self) -> f64 {
        if self.variance.is_infinite() {
            0.0
        } else {
            self.mean / self.variance
        }
    }

    pub fn is_proper(&self) -> bool {
        self.variance > 0.0 && self.variance.is_finite() && self.mean.is_finite()
    }

    /// Density at `x`. Only meaningful for proper instances.
    pub fn pdf(&self, x: f64) -> f64 {
        debug_assert!(self.is_proper(), "density of an improper gaussian");
        let sd = self.variance.sqrt();
        normal::pdf((x - self.mean) / sd) / sd
    }
}

/// Product `N(a)·N(b) = Z⁻¹·N(c)`; returns `c` and `ln Z⁻¹`.
///
/// Improper factors are accepted as long as the result has positive
/// precision. The normalizer uses `|σ_a² + σ_b²|` so the identity also
/// holds when one factor has negative variance.
pub fn gaussian_product(a: Gaussian1D, b: Gaussian1D) -> Result<(Gaussian1D, f64)> {
    let precision = a.precision() + b.precision();
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::DegenerateProduct { precision });
    }
    let c = Gaussian1D::from_natural(precision, a.precision_mean() + b.precision_mean());
    let sum = a.variance + b.variance;
    let diff = a.mean - b.mean;
    let log_norm = if sum.is_infinite() {
        // one factor is flat; the normalizer vanishes in the limit
        f64::NEG_INFINITY
    } else {
        -normal::HALF_LN_2PI - 0.5 * sum.abs().ln() - diff * diff / (2.0 * sum)
    };
    Ok((c, log_norm))
}

/// Quotient `N(num)/N(den)` in natural parameters. The result may be
/// improper; callers check [`Gaussian1D::is_proper`].
pub fn gaussian_divide(num: Gaussian1D, den: Gaussian1D) -> Gaussian1D {
    Gaussian1D::from_natural(
        num.precision() - den.precision(),
        num.precision_mean() - den.precision_mean(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianND {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianND {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {n} with {}x{} covariance",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        Ok(Self { mean, covariance })
    }

    pub fn bivariate(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(
            DVector::from_row_slice(&mean),
            DMatrix::from_row_slice(2, 2, &[cov[0][0], cov[0][1], cov[1][0], cov[1][1]]),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn marginal(&self, index: usize) -> Gaussian1D {
        Gaussian1D::new(self.mean[index], self.covariance[(index, index)])
    }
}

/// Conditional of the other coordinate of a bivariate Gaussian given
/// coordinate `observed_index` equals `observed_value`.
pub fn condition_gaussian(
    joint: &GaussianND,
    observed_index: usize,
    observed_value: f64,
) -> Result<Gaussian1D> {
    if joint.dim() != 2 || observed_index > 1 {
        return Err(Error::DimensionMismatch(format!(
            "conditioning needs a bivariate gaussian and index 0 or 1, got dim {} index {observed_index}",
            joint.dim()
        )));
    }
    let other = 1 - observed_index;
    let b = joint.covariance[(observed_index, observed_index)];
    if b <= 1e-300 {
        return Err(Error::SingularConditioning { variance: b });
    }
    let a = joint.covariance[(other, other)];
    let c = joint.covariance[(other, observed_index)];
    let gain = c / b;
    Ok(Gaussian1D::new(
        joint.mean[other] + gain * (observed_value - joint.mean[observed_index]),
        a - gain * c,
    ))
}

/// Zeroth, first and second moments of `Φ((x - m)/v)·N(x | μ, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitMoments {
    /// Standardized argument `(μ - m) / (v·sqrt(1 + σ²/v²))`.
    pub z: f64,
    /// Normalizer `Φ(z)`; may underflow to zero, `log_norm` does not.
    pub norm: f64,
    pub log_norm: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Moments of the cavity tilted by `Φ(label·(x - bias)/scale)`.
///
/// With `bias = 0` and `scale = 1` this is the EP site update for the
/// probit likelihood `Φ(y·f)`.
pub fn probit_gaussian_moments(
    cavity: Gaussian1D,
    label: f64,
    bias: f64,
    scale: f64,
) -> Result<ProbitMoments> {
    let v = label * scale;
    if v == 0.0 || !v.is_finite() {
        return Err(Error::InvalidInput(format!("probit scale {v} must be finite and non-zero")));
    }
    if !cavity.is_proper() {
        return Err(Error::InvalidInput(format!(
            "probit moments need a proper cavity, got variance {}",
            cavity.variance
        )));
    }
    let s2 = cavity.variance;
    let denom_sq = v * v + s2;
    // v·sqrt(1 + σ²/v²) keeps the sign of v
    let denom = v.signum() * denom_sq.sqrt();
    let z = (cavity.mean - bias) / denom;
    if !z.is_finite() {
        return Err(Error::NumericalUnderflow { z });
    }
    let log_norm = normal::log_cdf(z);
    let ratio = normal::inverse_mills(z);
    let mean = cavity.mean + s2 * ratio / denom;
    let variance = s2 - s2 * s2 * ratio * (z + ratio) / denom_sq;
    if !(variance > 0.0) || !mean.is_finite() {
        return Err(Error::NumericalUnderflow { z });
    }
    Ok(ProbitMoments {
        z,
        norm: normal::cdf(z),
        log_norm,
        mean,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn symmetric_product() {
        let (c, _) = gaussian_product(Gaussian1D::new(0.0, 1.0), Gaussian1D::new(0.0, 1.0)).unwrap();
        assert_eq!(c, Gaussian1D::new(0.0, 0.5));
    }

    #[test]
    fn product_of_two_moments() {
        let (c, log_norm) =
            gaussian_product(Gaussian1D::new(1.0, 2.0), Gaussian1D::new(3.0, 4.0)).unwrap();
        assert!(close(c.mean, 5.0 / 3.0, 1e-14));
        assert!(close(c.variance, 4.0 / 3.0, 1e-14));
        // N(1 | 3, 6)
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 6.0).ln() - 4.0 / 12.0;
        assert!(close(log_norm, expected, 1e-14));
    }

    #[test]
    fn product_with_improper_factor() {
        let (c, _) =
            gaussian_product(Gaussian1D::new(0.0, 1.0), Gaussian1D::new(0.0, -2.0)).unwrap();
        assert!(close(c.mean, 0.0, 1e-15));
        assert!(close(c.variance, 2.0, 1e-14));
        assert!(c.is_proper());
    }

    #[test]
    fn product_with_cancelling_precision_fails() {
        let err = gaussian_product(Gaussian1D::new(0.0, 1.0), Gaussian1D::new(0.0, -1.0));
        assert!(matches!(err, Err(Error::DegenerateProduct { .. })));
        let err = gaussian_product(Gaussian1D::new(0.0, 1.0), Gaussian1D::new(0.0, -0.5));
        assert!(matches!(err, Err(Error::DegenerateProduct { .. })));
    }

    #[test]
    fn divide_examples() {
        let q = gaussian_divide(Gaussian1D::new(0.0, 0.5), Gaussian1D::new(0.0, 1.0));
        assert!(close(q.mean, 0.0, 1e-15) && close(q.variance, 1.0, 1e-15));

        let q = gaussian_divide(Gaussian1D::new(5.0 / 3.0, 4.0 / 3.0), Gaussian1D::new(3.0, 4.0));
        assert!(close(q.mean, 1.0, 1e-13) && close(q.variance, 2.0, 1e-13));

        let q = gaussian_divide(Gaussian1D::new(0.0, 2.0), Gaussian1D::new(0.0, 1.0));
        assert!(close(q.variance, -2.0, 1e-14));
        assert!(!q.is_proper());
    }

    #[test]
    fn divide_by_flat_site_is_identity() {
        let num = Gaussian1D::new(0.3, 0.7);
        let q = gaussian_divide(num, Gaussian1D::from_natural(0.0, 0.0));
        assert!(close(q.mean, 0.3, 1e-14) && close(q.variance, 0.7, 1e-14));
    }

    #[test]
    fn conditioning_examples() {
        let indep = GaussianND::bivariate([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(condition_gaussian(&indep, 1, 5.0).unwrap(), Gaussian1D::new(0.0, 1.0));

        let corr = GaussianND::bivariate([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let c = condition_gaussian(&corr, 1, 1.0).unwrap();
        assert!(close(c.mean, 0.5, 1e-15) && close(c.variance, 0.75, 1e-15));

        let shifted = GaussianND::bivariate([2.0, 3.0], [[4.0, 2.0], [2.0, 4.0]]).unwrap();
        let c = condition_gaussian(&shifted, 1, 3.0).unwrap();
        assert!(close(c.mean, 2.0, 1e-15) && close(c.variance, 3.0, 1e-15));
    }

    #[test]
    fn conditioning_on_zero_variance_fails() {
        let g = GaussianND::bivariate([0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            condition_gaussian(&g, 1, 0.0),
            Err(Error::SingularConditioning { .. })
        ));
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        assert!(GaussianND::bivariate([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]]).is_err());
    }

    #[test]
    fn probit_standard_cavity() {
        let m = probit_gaussian_moments(Gaussian1D::new(0.0, 1.0), 1.0, 0.0, 1.0).unwrap();
        assert_eq!(m.norm, 0.5);
        // σ²·φ(0)/(Φ(0)·sqrt(2)) = sqrt(2)·φ(0)
        assert!(close(m.mean, 2f64.sqrt() * normal::pdf(0.0), 1e-15));
        assert!(close(m.mean, 0.564_189_583_547_756_3, 1e-12));
        assert!(m.variance < 1.0);
    }

    #[test]
    fn probit_label_complement() {
        let pos = probit_gaussian_moments(Gaussian1D::new(1.0, 1.0), 1.0, 0.0, 1.0).unwrap();
        let neg = probit_gaussian_moments(Gaussian1D::new(1.0, 1.0), -1.0, 0.0, 1.0).unwrap();
        assert!(close(pos.norm, 0.760_249_938_906_523_2, 1e-12));
        assert!(close(neg.norm, 0.239_750_061_093_476_8, 1e-12));
        assert!(close(pos.norm + neg.norm, 1.0, 1e-15));
    }

    #[test]
    fn probit_rejects_zero_scale_and_improper_cavity() {
        assert!(probit_gaussian_moments(Gaussian1D::new(0.0, 1.0), 1.0, 0.0, 0.0).is_err());
        assert!(probit_gaussian_moments(Gaussian1D::new(0.0, -1.0), 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn probit_confidently_wrong_site_is_finite() {
        let m = probit_gaussian_moments(Gaussian1D::new(-40.0, 0.5), 1.0, 0.0, 1.0).unwrap();
        assert!(m.log_norm.is_finite() && m.log_norm < -500.0);
        assert!(m.variance > 0.0 && m.variance < 0.5);
        assert!(m.mean > -40.0);
    }

    proptest! {
        #[test]
        fn product_divide_round_trip(
            am in -10.0f64..10.0, av in 1e-2f64..1e2,
            bm in -10.0f64..10.0, bv in 1e-2f64..1e2,
        ) {
            let a = Gaussian1D::new(am, av);
            let b = Gaussian1D::new(bm, bv);
            let (c, _) = gaussian_product(a, b).unwrap();
            let back = gaussian_divide(c, b);
            prop_assert!((back.variance - av).abs() <= 1e-9 * av);
            prop_assert!((back.mean - am).abs() <= 1e-9 * am.abs().max(1.0));
        }

        #[test]
        fn tilting_shrinks_variance(
            mean in -30.0f64..30.0, var in 1e-3f64..1e3, label in prop::bool::ANY,
        ) {
            let y = if label { 1.0 } else { -1.0 };
            let m = probit_gaussian_moments(Gaussian1D::new(mean, var), y, 0.0, 1.0).unwrap();
            prop_assert!(m.variance <= var);
            prop_assert!(m.norm >= 0.0 && m.norm <= 1.0);
        }

        #[test]
        fn covariance_and_precision_forms_agree(
            a in 0.1f64..5.0, b in 0.1f64..5.0, rho in -0.95f64..0.95,
            mx in -3.0f64..3.0, my in -3.0f64..3.0, y in -5.0f64..5.0,
        ) {
            let c = rho * (a * b).sqrt();
            let g = GaussianND::bivariate([mx, my], [[a, c], [c, b]]).unwrap();
            let cov_form = condition_gaussian(&g, 1, y).unwrap();
            let prec = g.covariance.clone().try_inverse().unwrap();
            let a_t = prec[(0, 0)];
            let c_t = prec[(0, 1)];
            let mean = mx - c_t / a_t * (y - my);
            let var = 1.0 / a_t;
            prop_assert!((cov_form.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!((cov_form.variance - var).abs() <= 1e-9 * var);
        }
    }
}
