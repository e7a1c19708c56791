//! Fixed-point rationals on a 1e-12 grid.
//!
//! Decision boundaries such as `(x + a) / (n + m) < p_t - eps1` are compared
//! by cross-multiplying scaled integers, so values that sit exactly on an
//! interval endpoint (1/4 against 0.25, 7/20 against 0.35) resolve the same
//! way on every platform.

use std::cmp::Ordering;

const SCALE: i128 = 1_000_000_000_000;

/// A real rounded to the nearest multiple of 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Fixed(i128);

impl Fixed {
    pub(crate) fn from_f64(v: f64) -> Self {
        debug_assert!(v.is_finite());
        Fixed((v * SCALE as f64).round() as i128)
    }

    pub(crate) fn from_int(v: i64) -> Self {
        Fixed(v as i128 * SCALE)
    }

    pub(crate) fn add(self, other: Fixed) -> Fixed {
        Fixed(self.0 + other.0)
    }

    pub(crate) fn sub(self, other: Fixed) -> Fixed {
        Fixed(self.0 - other.0)
    }
}

/// Compares `num / den` with `threshold`; `den` must be positive.
pub(crate) fn cmp_ratio(num: Fixed, den: Fixed, threshold: Fixed) -> Ordering {
    debug_assert!(den.0 > 0);
    (num.0 * SCALE).cmp(&(threshold.0 * den.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_ratios_are_exact() {
        let lower = Fixed::from_f64(0.3).sub(Fixed::from_f64(0.05));
        let upper = Fixed::from_f64(0.3).add(Fixed::from_f64(0.05));
        assert_eq!(
            cmp_ratio(Fixed::from_int(1), Fixed::from_int(4), lower),
            Ordering::Equal
        );
        assert_eq!(
            cmp_ratio(Fixed::from_int(7), Fixed::from_int(20), upper),
            Ordering::Equal
        );
        assert_eq!(
            cmp_ratio(Fixed::from_int(1), Fixed::from_int(5), lower),
            Ordering::Less
        );
    }
}
