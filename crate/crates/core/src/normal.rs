//! Standard normal density, distribution function and the ratio
//! `φ(z)/Φ(z)`, evaluated so that the far left tail stays finite.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `ln(2π) / 2`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the left tail switches to the continued fraction.
const TAIL_SWITCH: f64 = -6.0;

const CF_TERMS: usize = 80;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn log_pdf(z: f64) -> f64 {
    -0.5 * z * z - HALF_LN_2PI
}

pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Mills ratio `Φ(-x)/φ(x)` for `x > 0` by its continued fraction
/// `1/(x + 1/(x + 2/(x + 3/(x + ...))))`.
fn mills_tail(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=CF_TERMS).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

pub fn log_cdf(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        log_pdf(z) + mills_tail(-z).ln()
    } else if z > 5.0 {
        (-cdf(-z)).ln_1p()
    } else {
        cdf(z).ln()
    }
}

/// `φ(z)/Φ(z)`, finite for every finite `z`.
pub fn inverse_mills(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        1.0 / mills_tail(-z)
    } else {
        pdf(z) / cdf(z)
    }
}

/// Natural-log binary entropy of a Bernoulli probability.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
    }

    #[test]
    fn tail_branch_agrees_with_erfc_near_switch() {
        for &z in &[-6.0, -6.5, -7.0, -8.0, -10.0] {
            let direct = pdf(z) / cdf(z);
            let tail = 1.0 / mills_tail(-z);
            assert!((direct - tail).abs() / direct < 1e-12, "z={z}: {direct} vs {tail}");
            assert!((cdf(z).ln() - log_cdf(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn far_tail_stays_finite() {
        let r = inverse_mills(-1e3);
        assert!(r.is_finite());
        // φ(z)/Φ(z) ~ -z for z → -∞
        assert!((r - 1e3).abs() < 1e-2);
        assert!(log_cdf(-1e3).is_finite());
        assert!(log_cdf(40.0) <= 0.0);
    }

    #[test]
    fn entropy_maximal_at_half() {
        assert!((binary_entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert!(binary_entropy(0.6) > binary_entropy(0.9));
    }
}
