//! Standard normal density, distribution function and the tail-stable
//! quantities needed by the probit likelihood.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Below this argument the CDF is evaluated through the Mills ratio.
const TAIL: f64 = -5.0;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Mills ratio `Φ(-t)/φ(t)` for `t > 0` by backward continued fraction.
fn mills_ratio(t: f64) -> f64 {
    let mut acc = t;
    for k in (1..=120).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `ln Φ(x)`, finite for all finite `x`.
pub fn ln_cdf(x: f64) -> f64 {
    if x < TAIL {
        ln_pdf(x) + mills_ratio(-x).ln()
    } else {
        cdf(x).ln()
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, finite for all finite `x`.
pub fn inv_mills(x: f64) -> f64 {
    if x < TAIL {
        1.0 / mills_ratio(-x)
    } else {
        pdf(x) / cdf(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-12);
    }

    #[test]
    fn tail_branch_is_continuous() {
        let below = ln_cdf(TAIL - 1e-9);
        let above = cdf(TAIL + 1e-9).ln();
        assert!((below - above).abs() < 1e-7);
        let lb = inv_mills(TAIL - 1e-9);
        let la = pdf(TAIL + 1e-9) / cdf(TAIL + 1e-9);
        assert!((lb - la).abs() / la < 1e-7);
    }

    #[test]
    fn deep_tail_is_finite() {
        let l = ln_cdf(-60.0);
        assert!(l.is_finite() && l < -1800.0);
        // φ/Φ ~ -x for x → -∞
        assert!((inv_mills(-60.0) - 60.0).abs() < 0.1);
    }
}
