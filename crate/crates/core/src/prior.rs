//! Per-dose power priors built from historical DLT data.
//!
//! Dose `d` receives `beta(w_d * x0_d + a0, w_d * (n0_d - x0_d) + b0)`. Its
//! effective sample size `m_d = a0 + b0 + w_d * n0_d` is kept, while the
//! prior means are made monotone across doses by isotonic regression; the
//! transformed prior is `beta(a*_d, m_d - a*_d)` with `a*_d = m_d * p*_d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DesignParams;
use crate::stats::{isotonic_regression, BetaParams};

/// DLT counts `x` and patient counts `n` per dose from a previous trial.
/// Counts may be fractional (pseudo data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoricalData {
    pub x: Vec<f64>,
    pub n: Vec<f64>,
}

impl HistoricalData {
    pub fn new(x: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        let hist = Self { x, n };
        hist.validate()?;
        Ok(hist)
    }

    /// No historical information on any of `doses` doses.
    pub fn empty(doses: usize) -> Self {
        Self { x: vec![0.0; doses], n: vec![0.0; doses] }
    }

    pub fn doses(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.iter().all(|&n| n == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::InvalidArgument("history must cover at least one dose".into()));
        }
        if self.x.len() != self.n.len() {
            return Err(Error::InvalidArgument(format!(
                "history x has {} doses but n has {}",
                self.x.len(),
                self.n.len()
            )));
        }
        for (d, (&x, &n)) in self.x.iter().zip(&self.n).enumerate() {
            if !(x.is_finite() && n.is_finite() && x >= 0.0 && n >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "dose {}: history counts must be finite and non-negative",
                    d + 1
                )));
            }
            if x > n {
                return Err(Error::InvalidArgument(format!(
                    "dose {}: history x ({x}) exceeds n ({n})",
                    d + 1
                )));
            }
        }
        Ok(())
    }
}

/// Fixed per-dose power parameters, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub omega: Vec<f64>,
}

impl PowerParams {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if let Some((d, w)) = omega
            .iter()
            .enumerate()
            .find(|(_, w)| !(0.0..=1.0).contains(*w))
        {
            return Err(Error::InvalidArgument(format!(
                "dose {}: power parameter {w} outside [0, 1]",
                d + 1
            )));
        }
        Ok(Self { omega })
    }

    pub fn uniform(doses: usize, value: f64) -> Self {
        Self { omega: vec![value; doses] }
    }
}

/// Isotonic-transformed power prior for a single dose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosePrior {
    /// Prior expected number of DLTs.
    pub a_star: f64,
    /// Effective sample size of the prior.
    pub m: f64,
    /// Prior mean after the isotonic transform.
    pub p_star: f64,
    /// Power parameter that produced this prior.
    pub omega: f64,
}

impl DosePrior {
    pub fn beta(&self) -> Result<BetaParams> {
        BetaParams::new(self.a_star, self.m - self.a_star)
    }
}

fn check_dims(hist: &HistoricalData, w: &PowerParams) -> Result<()> {
    hist.validate()?;
    if w.omega.len() != hist.doses() {
        return Err(Error::InvalidArgument(format!(
            "{} power parameters for {} doses",
            w.omega.len(),
            hist.doses()
        )));
    }
    PowerParams::new(w.omega.clone()).map(|_| ())
}

/// Untransformed power prior for each dose.
pub fn raw_power_prior(
    hist: &HistoricalData,
    w: &PowerParams,
    dp: &DesignParams,
) -> Result<Vec<BetaParams>> {
    check_dims(hist, w)?;
    hist.x
        .iter()
        .zip(&hist.n)
        .zip(&w.omega)
        .map(|((&x, &n), &omega)| BetaParams::new(omega * x + dp.a0, omega * (n - x) + dp.b0))
        .collect()
}

pub fn transformed_prior(
    hist: &HistoricalData,
    w: &PowerParams,
    dp: &DesignParams,
) -> Result<Vec<DosePrior>> {
    let raw = raw_power_prior(hist, w, dp)?;
    let means: Vec<f64> = raw.iter().map(BetaParams::mean).collect();
    let p_star = isotonic_regression(&means)?;
    Ok(p_star
        .into_iter()
        .zip(&hist.n)
        .zip(&w.omega)
        .map(|((p_star, &n0), &omega)| {
            let m = dp.a0 + dp.b0 + omega * n0;
            DosePrior { a_star: m * p_star, m, p_star, omega }
        })
        .collect())
}

/// Priors carrying only the initial vague prior; decisions then coincide
/// with i3+3 over the tabulated range.
pub fn vague_priors(doses: usize, dp: &DesignParams) -> Vec<DosePrior> {
    transformed_prior(
        &HistoricalData::empty(doses),
        &PowerParams::uniform(doses, 1.0),
        dp,
    )
    .expect("empty history is always valid")
}
