//! Numerical kernels: beta tail probabilities and unweighted isotonic regression.
//!
//! The regularized incomplete beta function is evaluated with the modified
//! Lentz continued fraction, switching to the symmetric form
//! `I_x(a, b) = 1 - I_{1-x}(b, a)` when `x > (a + 1) / (a + b + 2)`. Both the
//! lower and the upper tail come out of the branch that converges, so neither
//! side is formed by cancellation against 1.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_ITER: usize = 300;
const TINY: f64 = 1e-300;

/// Shapes of a beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let params = Self { alpha, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta shape alpha must be finite and positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta shape beta must be finite and positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Effective sample size `alpha + beta`.
    pub fn ess(&self) -> f64 {
        self.alpha + self.beta
    }
}

/// `Pr(p > threshold)` for `p ~ beta(alpha, beta)`.
pub fn beta_tail(params: BetaParams, threshold: f64) -> Result<f64> {
    params.validate()?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in [0, 1], got {threshold}"
        )));
    }
    if threshold == 0.0 {
        return Ok(1.0);
    }
    if threshold == 1.0 {
        return Ok(0.0);
    }
    let (lower, upper) = incomplete_beta_pair(params.alpha, params.beta, threshold);
    debug_assert!((lower + upper - 1.0).abs() < 1e-9);
    Ok(upper.clamp(0.0, 1.0))
}

/// Mean of a beta law, `alpha / (alpha + beta)`.
pub fn beta_mean(params: BetaParams) -> Result<f64> {
    params.validate()?;
    Ok(params.mean())
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    BetaParams::new(a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x must lie in [0, 1], got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    Ok(incomplete_beta_pair(a, b, x).0.clamp(0.0, 1.0))
}

/// Returns `(I_x(a, b), 1 - I_x(a, b))` for `0 < x < 1`.
fn incomplete_beta_pair(a: f64, b: f64, x: f64) -> (f64, f64) {
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = ln_front.exp() * continued_fraction(a, b, x) / a;
        (lower, 1.0 - lower)
    } else {
        let upper = ln_front.exp() * continued_fraction(b, a, 1.0 - x) / b;
        (1.0 - upper, upper)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Unweighted pool-adjacent-violators fit: the L2-closest non-decreasing
/// sequence under equal weights.
pub fn isotonic_regression(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "isotonic regression needs at least one value".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "isotonic regression input must be finite, got {bad}"
        )));
    }

    // (sum, count) per pooled block; strict violations only, ties stay unpooled.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }

    let mut fitted = Vec::with_capacity(values.len());
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        fitted.extend(std::iter::repeat_n(mean, count));
    }
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn uniform_tail_is_linear() {
        assert!((beta_tail(beta(1.0, 1.0), 0.3).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn power_law_tail_closed_form() {
        let tail = beta_tail(beta(4.0, 1.0), 0.3).unwrap();
        assert!((tail - (1.0 - 0.3f64.powi(4))).abs() < 1e-12);
        assert!((tail - 0.9919).abs() < 1e-12);
    }

    #[test]
    fn tail_endpoints_are_exact() {
        let p = beta(0.005, 0.005);
        assert_eq!(beta_tail(p, 0.0).unwrap(), 1.0);
        assert_eq!(beta_tail(p, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_shapes_and_thresholds() {
        assert!(BetaParams::new(0.0, 1.0).is_err());
        assert!(BetaParams::new(1.0, -2.0).is_err());
        assert!(BetaParams::new(f64::NAN, 1.0).is_err());
        assert!(BetaParams::new(f64::INFINITY, 1.0).is_err());
        let bad = BetaParams { alpha: -1.0, beta: 1.0 };
        assert!(matches!(beta_tail(bad, 0.3), Err(Error::InvalidParameter(_))));
        assert!(beta_tail(beta(1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn worked_example_means() {
        assert!((beta_mean(beta(1.5, 5.5)).unwrap() - 0.214).abs() < 5e-4);
        assert!((beta_mean(beta(3.5, 0.5)).unwrap() - 0.875).abs() < 1e-12);
        for c in [0.005, 1.0, 7.3] {
            assert_eq!(beta_mean(beta(c, c)).unwrap(), 0.5);
        }
    }

    #[test]
    fn tiny_shapes_stay_finite() {
        let t = beta_tail(beta(0.005, 0.005), 0.3).unwrap();
        assert!(t > 0.0 && t < 1.0);
        let t = beta_tail(beta(0.005, 27.005), 0.3).unwrap();
        assert!((0.0..1e-3).contains(&t));
    }

    #[test]
    fn pava_worked_example() {
        let fit = isotonic_regression(&[0.214, 0.125, 0.125, 0.357, 0.875]).unwrap();
        let pooled = (0.214 + 0.125 + 0.125) / 3.0;
        let expected = [pooled, pooled, pooled, 0.357, 0.875];
        for (f, e) in fit.iter().zip(expected) {
            assert!((f - e).abs() < 1e-15, "{fit:?}");
        }
        // Published to three decimals by truncation.
        assert_eq!((fit[0] * 1000.0).floor() / 1000.0, 0.154);
    }

    #[test]
    fn pava_simple_cases() {
        assert_eq!(isotonic_regression(&[0.5, 0.2]).unwrap(), vec![0.35, 0.35]);
        let sorted = [0.1, 0.1, 0.2, 0.9];
        assert_eq!(isotonic_regression(&sorted).unwrap(), sorted.to_vec());
        assert!(isotonic_regression(&[]).is_err());
        assert!(isotonic_regression(&[0.1, f64::NAN]).is_err());
    }
}
