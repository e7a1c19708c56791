//! Choice of the per-dose power parameters.
//!
//! A power parameter is admissible at a dose when three conditions hold:
//!
//! 1. tolerability: at most an `alpha` share of decision-table cells become
//!    more aggressive than i3+3 once the prior pseudo data are added;
//! 2. ceiling: the effective sample size `a0 + b0 + w * n0` stays within `K`;
//! 3. retaining: the prior alone (on a `beta(1, 1)` base) does not put more
//!    than `xi` posterior mass above `p_t`.
//!
//! [`calibrate_omegas`] approximates the largest admissible parameters in
//! three steps: isotonize the observed historical rates into pseudo data,
//! bisect each dose independently against the pseudo data, then isotonize
//! the implied prior means and solve back for the weights.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{core_decision, safety_posterior};
use crate::error::Result;
use crate::exact::Fixed;
use crate::params::DesignParams;
use crate::prior::{transformed_prior, DosePrior, HistoricalData, PowerParams};
use crate::stats::isotonic_regression;

const BISECTION_TOLERANCE: f64 = 1e-4;
const GRID_STEP: f64 = 0.01;

/// Share of table cells `(n, x)`, `1 <= n <= table_cap`, where borrowing
/// yields a strictly more aggressive decision than i3+3.
pub fn check_tolerability(prior: &DosePrior, dp: &DesignParams) -> Result<f64> {
    let mut cells = 0usize;
    let mut aggressive = 0usize;
    for n in 1..=dp.table_cap {
        for x in 0..=n {
            let borrowed = core_decision(x, n, prior.a_star, prior.m, dp)?;
            let plain = core_decision(x, n, 0.0, 0.0, dp)?;
            cells += 1;
            if borrowed.aggressiveness() > plain.aggressiveness() {
                aggressive += 1;
            }
        }
    }
    Ok(aggressive as f64 / cells as f64)
}

fn tolerable(fraction: f64, dp: &DesignParams) -> bool {
    fraction <= dp.alpha + 1e-12
}

/// `a0 + b0 + omega * n0 <= K`.
pub fn check_ceiling(omega: f64, n0: f64, dp: &DesignParams) -> bool {
    if dp.k.is_infinite() {
        return true;
    }
    let ess = Fixed::from_f64(dp.a0)
        .add(Fixed::from_f64(dp.b0))
        .add(Fixed::from_f64(omega * n0));
    ess <= Fixed::from_f64(dp.k)
}

/// Prior-only exclusion probability stays strictly below `xi`.
pub fn check_retaining(prior: &DosePrior, dp: &DesignParams) -> Result<bool> {
    Ok(safety_posterior(0, 0, prior, dp)? < dp.xi)
}

/// Outcome of the three conditions at one dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseConditions {
    pub tolerability_fraction: f64,
    pub tolerability_ok: bool,
    pub ceiling_ok: bool,
    pub retaining_ok: bool,
}

impl DoseConditions {
    pub fn all_ok(&self) -> bool {
        self.tolerability_ok && self.ceiling_ok && self.retaining_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub doses: Vec<DoseConditions>,
}

impl ConditionReport {
    pub fn all_ok(&self) -> bool {
        self.doses.iter().all(DoseConditions::all_ok)
    }
}

pub fn dose_conditions(prior: &DosePrior, n0: f64, dp: &DesignParams) -> Result<DoseConditions> {
    let tolerability_fraction = check_tolerability(prior, dp)?;
    Ok(DoseConditions {
        tolerability_fraction,
        tolerability_ok: tolerable(tolerability_fraction, dp),
        ceiling_ok: check_ceiling(prior.omega, n0, dp),
        retaining_ok: check_retaining(prior, dp)?,
    })
}

/// Re-evaluates the three conditions on the transformed prior that `w`
/// induces on `hist`.
pub fn evaluate_conditions(
    hist: &HistoricalData,
    w: &PowerParams,
    dp: &DesignParams,
) -> Result<ConditionReport> {
    let priors = transformed_prior(hist, w, dp)?;
    let doses = priors
        .iter()
        .zip(&hist.n)
        .map(|(prior, &n0)| dose_conditions(prior, n0, dp))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionReport { doses })
}

/// Intermediate quantities of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationWorkspace {
    /// Pseudo history `(n0 * p'0, n0)`.
    pub pseudo_hist: HistoricalData,
    /// 0-based doses with historical patients.
    pub observed_doses: Vec<usize>,
    /// Isotonic historical rates, with unobserved doses filled by a seeded
    /// uniform draw between their observed neighbours.
    pub pseudo_rates: Vec<f64>,
    /// Per-dose bisection result against the pseudo history.
    pub omega_intermediate: Vec<f64>,
    /// Prior means implied by `omega_intermediate`.
    pub intermediate_means: Vec<f64>,
    /// Isotonic version of `intermediate_means`.
    pub p_star: Vec<f64>,
    pub omega_final: Vec<f64>,
    /// Doses whose solved weight failed re-verification and were reset to
    /// the intermediate value.
    pub fallback: Vec<bool>,
    pub seed: u64,
}

/// Prior from pseudo data `(x, n)` at weight `omega`, without any isotonic
/// coupling to other doses.
fn single_dose_prior(x: f64, n: f64, omega: f64, dp: &DesignParams) -> DosePrior {
    let a = omega * x + dp.a0;
    let m = dp.a0 + dp.b0 + omega * n;
    DosePrior { a_star: a, m, p_star: a / m, omega }
}

fn admissible(x: f64, n: f64, omega: f64, dp: &DesignParams) -> Result<bool> {
    if !check_ceiling(omega, n, dp) {
        return Ok(false);
    }
    let prior = single_dose_prior(x, n, omega, dp);
    Ok(check_retaining(&prior, dp)? && tolerable(check_tolerability(&prior, dp)?, dp))
}

/// Largest admissible weight on `[0, 1]` for one dose of pseudo data.
fn max_admissible_weight(x: f64, n: f64, dp: &DesignParams) -> Result<f64> {
    if admissible(x, n, 1.0, dp)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if admissible(x, n, mid, dp)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if admissible(x, n, lo, dp)? {
        return Ok(lo);
    }
    // The joint predicate need not be monotone in the weight.
    let steps = (1.0 / GRID_STEP).round() as u32;
    for k in (0..=steps).rev() {
        let omega = k as f64 * GRID_STEP;
        if admissible(x, n, omega, dp)? {
            return Ok(omega);
        }
    }
    Ok(0.0)
}

fn fill_pseudo_rates(
    hist: &HistoricalData,
    observed: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let rates: Vec<f64> = observed.iter().map(|&d| hist.x[d] / hist.n[d]).collect();
    let fitted = isotonic_regression(&rates)?;
    let mut pseudo = vec![f64::NAN; hist.doses()];
    for (&d, &p) in observed.iter().zip(&fitted) {
        pseudo[d] = p;
    }
    for d in 0..hist.doses() {
        if !pseudo[d].is_nan() {
            continue;
        }
        let below = observed.iter().rev().find(|&&o| o < d).map_or(0.0, |&o| pseudo[o]);
        let above = observed.iter().find(|&&o| o > d).map_or(1.0, |&o| pseudo[o]);
        pseudo[d] = if above > below { rng.random_range(below..above) } else { below };
    }
    Ok(pseudo)
}

/// Calibrated power parameters for `hist`; deterministic in `seed`.
pub fn calibrate_omegas(
    hist: &HistoricalData,
    dp: &DesignParams,
    seed: u64,
) -> Result<(PowerParams, CalibrationWorkspace)> {
    hist.validate()?;
    dp.validate()?;
    let doses = hist.doses();
    let observed: Vec<usize> = (0..doses).filter(|&d| hist.n[d] > 0.0).collect();

    if observed.is_empty() {
        let ones = vec![1.0; doses];
        let workspace = CalibrationWorkspace {
            pseudo_hist: hist.clone(),
            observed_doses: observed,
            pseudo_rates: vec![dp.a0 / (dp.a0 + dp.b0); doses],
            omega_intermediate: ones.clone(),
            intermediate_means: vec![dp.a0 / (dp.a0 + dp.b0); doses],
            p_star: vec![dp.a0 / (dp.a0 + dp.b0); doses],
            omega_final: ones.clone(),
            fallback: vec![false; doses],
            seed,
        };
        return Ok((PowerParams { omega: ones }, workspace));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pseudo_rates = fill_pseudo_rates(hist, &observed, &mut rng)?;
    let pseudo_x: Vec<f64> = hist.n.iter().zip(&pseudo_rates).map(|(n, p)| n * p).collect();
    let pseudo_hist = HistoricalData { x: pseudo_x, n: hist.n.clone() };

    let mut omega_intermediate = vec![1.0; doses];
    let mut intermediate_means = pseudo_rates.clone();
    for &d in &observed {
        let (x, n) = (pseudo_hist.x[d], pseudo_hist.n[d]);
        let omega = max_admissible_weight(x, n, dp)?;
        omega_intermediate[d] = omega;
        intermediate_means[d] = single_dose_prior(x, n, omega, dp).p_star;
    }

    let p_star = isotonic_regression(&intermediate_means)?;
    let mut omega_final = vec![1.0; doses];
    for &d in &observed {
        let (x, n) = (pseudo_hist.x[d], pseudo_hist.n[d]);
        let denom = p_star[d] * n - x;
        let solved = (dp.a0 - p_star[d] * (dp.a0 + dp.b0)) / denom;
        omega_final[d] = if denom.abs() < 1e-12 || !solved.is_finite() {
            omega_intermediate[d]
        } else {
            solved.clamp(0.0, 1.0)
        };
    }

    // The solved weights carry no guarantee; reset offenders one at a time.
    let mut fallback = vec![false; doses];
    loop {
        let report = evaluate_conditions(hist, &PowerParams { omega: omega_final.clone() }, dp)?;
        let offenders: Vec<usize> = observed
            .iter()
            .copied()
            .filter(|&d| !report.doses[d].all_ok() && !fallback[d])
            .collect();
        if offenders.is_empty() {
            break;
        }
        for d in offenders {
            fallback[d] = true;
            omega_final[d] = omega_intermediate[d];
        }
    }

    let workspace = CalibrationWorkspace {
        pseudo_hist,
        observed_doses: observed,
        pseudo_rates,
        omega_intermediate,
        intermediate_means,
        p_star,
        omega_final: omega_final.clone(),
        fallback,
        seed,
    };
    Ok((PowerParams { omega: omega_final }, workspace))
}
