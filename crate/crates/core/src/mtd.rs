//! End-of-trial MTD selection.
//!
//! Posterior means are formed under two priors, the transformed power prior
//! `beta(a*, m - a*)` and the vague `beta(a0, b0)`, and each vector is made
//! monotone over the treated doses. Candidates are treated doses where either
//! monotone mean stays within the upper end of the equivalence interval; the
//! pick is the candidate whose power-prior mean is nearest `p_t`.

use serde::{Deserialize, Serialize};

use crate::decision::TrialState;
use crate::error::{Error, Result};
use crate::params::DesignParams;
use crate::prior::DosePrior;
use crate::stats::isotonic_regression;

const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtdResult {
    /// 0-based selected dose.
    pub selected: Option<usize>,
    /// Monotone posterior means under the power prior; `None` for untreated doses.
    pub p_tilde_power: Vec<Option<f64>>,
    /// Monotone posterior means under the vague prior.
    pub p_tilde_vague: Vec<Option<f64>>,
    /// 0-based candidate doses.
    pub d_safe: Vec<usize>,
}

fn monotone_over_treated(means: &[f64], treated: &[usize], doses: usize) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; doses];
    if treated.is_empty() {
        return Ok(out);
    }
    let fitted = isotonic_regression(&treated.iter().map(|&d| means[d]).collect::<Vec<_>>())?;
    for (&d, p) in treated.iter().zip(fitted) {
        out[d] = Some(p);
    }
    Ok(out)
}

pub fn select_mtd(state: &TrialState, priors: &[DosePrior], dp: &DesignParams) -> Result<MtdResult> {
    state.validate()?;
    let doses = state.doses();
    if priors.len() != doses {
        return Err(Error::InvalidArgument(format!("{} priors for {doses} doses", priors.len())));
    }
    let treated: Vec<usize> = (0..doses).filter(|&d| state.n[d] > 0).collect();

    let power_means: Vec<f64> = (0..doses)
        .map(|d| (state.x[d] as f64 + priors[d].a_star) / (state.n[d] as f64 + priors[d].m))
        .collect();
    let vague_means: Vec<f64> = (0..doses)
        .map(|d| (state.x[d] as f64 + dp.a0) / (state.n[d] as f64 + dp.a0 + dp.b0))
        .collect();
    let p_tilde_power = monotone_over_treated(&power_means, &treated, doses)?;
    let p_tilde_vague = monotone_over_treated(&vague_means, &treated, doses)?;

    let upper = dp.ei_upper();
    let d_safe: Vec<usize> = treated
        .iter()
        .copied()
        .filter(|&d| {
            p_tilde_power[d].is_some_and(|p| p <= upper) || p_tilde_vague[d].is_some_and(|p| p <= upper)
        })
        .collect();

    let distance = |d: usize| (p_tilde_power[d].expect("treated") - dp.p_t).abs();
    let selected = d_safe
        .iter()
        .map(|&d| distance(d))
        .min_by(f64::total_cmp)
        .map(|best| {
            let tied: Vec<usize> = d_safe
                .iter()
                .copied()
                .filter(|&d| distance(d) - best <= TIE_TOLERANCE)
                .collect();
            let lowest = tied[0];
            if p_tilde_power[lowest].expect("treated") > dp.p_t {
                lowest
            } else {
                *tied.last().expect("non-empty")
            }
        });

    Ok(MtdResult { selected, p_tilde_power, p_tilde_vague, d_safe })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::vague_priors;

    #[test]
    fn terminated_at_dose_one_selects_nothing() {
        let dp = DesignParams::default();
        let mut state = TrialState::new(5);
        state.x[0] = 3;
        state.n[0] = 3;
        state.excluded = vec![true; 5];
        state.terminated = true;
        let result = select_mtd(&state, &vague_priors(5, &dp), &dp).unwrap();
        assert!((result.p_tilde_vague[0].unwrap() - 3.005 / 3.01).abs() < 1e-12);
        assert!(result.d_safe.is_empty());
        assert_eq!(result.selected, None);
    }

    #[test]
    fn single_treated_dose_is_selected() {
        let dp = DesignParams::default();
        let mut state = TrialState::new(3);
        state.x[0] = 1;
        state.n[0] = 6;
        let result = select_mtd(&state, &vague_priors(3, &dp), &dp).unwrap();
        assert!((result.p_tilde_vague[0].unwrap() - 1.005 / 6.01).abs() < 1e-12);
        assert_eq!(result.selected, Some(0));
        assert_eq!(result.p_tilde_power[1], None);
    }

    #[test]
    fn ties_below_target_pick_highest() {
        let dp = DesignParams::default();
        let mut state = TrialState::new(3);
        state.x = vec![1, 1, 0];
        state.n = vec![6, 6, 0];
        let result = select_mtd(&state, &vague_priors(3, &dp), &dp).unwrap();
        assert_eq!(result.selected, Some(1));
    }

    #[test]
    fn ties_above_target_pick_lowest() {
        let dp = DesignParams::default();
        let mut state = TrialState::new(3);
        // Pooled mean 4/12 sits above 0.3 but inside the interval.
        state.x = vec![3, 1, 0];
        state.n = vec![6, 6, 0];
        let result = select_mtd(&state, &vague_priors(3, &dp), &dp).unwrap();
        let p = result.p_tilde_power;
        assert_eq!(p[0], p[1]);
        assert!(p[0].unwrap() > dp.p_t);
        assert_eq!(result.selected, Some(0));
    }

    #[test]
    fn nothing_treated_selects_nothing() {
        let dp = DesignParams::default();
        let state = TrialState::new(4);
        let result = select_mtd(&state, &vague_priors(4, &dp), &dp).unwrap();
        assert_eq!(result.selected, None);
        assert!(result.d_safe.is_empty());
    }
}
