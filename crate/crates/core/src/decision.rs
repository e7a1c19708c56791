//! Dose-escalation decisions, safety rules, and pretabulated decision tables.
//!
//! At the current dose the design forms the pseudo data `(x + a*, n + m)` and
//! compares `q1 = (x + a*) / (n + m)` and `q2 = (x + a* - 1) / (n + m)` with
//! the equivalence interval `[p_t - eps1, p_t + eps2]`:
//!
//! * `q1` below the interval: escalate;
//! * `q1` inside (endpoints included): stay;
//! * `q1` above and `q2` below: stay;
//! * otherwise de-escalate.
//!
//! With `a* = m = 0` this is exactly the i3+3 rule.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cmp_ratio, Fixed};
use crate::params::DesignParams;
use crate::prior::DosePrior;
use crate::stats::{beta_tail, BetaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "E")]
    Escalate,
    #[serde(rename = "S")]
    Stay,
    #[serde(rename = "D")]
    DeEscalate,
    /// De-escalate and remove the current and all higher doses.
    #[serde(rename = "DU")]
    DeEscalateUnacceptable,
    #[serde(rename = "TERMINATE")]
    TerminateTrial,
}

impl Decision {
    pub fn symbol(self) -> &'static str {
        match self {
            Decision::Escalate => "E",
            Decision::Stay => "S",
            Decision::DeEscalate => "D",
            Decision::DeEscalateUnacceptable => "DU",
            Decision::TerminateTrial => "TERMINATE",
        }
    }

    /// Higher means the next cohort is sent to a higher dose.
    pub fn aggressiveness(self) -> u8 {
        match self {
            Decision::Escalate => 2,
            Decision::Stay => 1,
            Decision::DeEscalate | Decision::DeEscalateUnacceptable | Decision::TerminateTrial => 0,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" => Ok(Decision::Escalate),
            "S" => Ok(Decision::Stay),
            "D" => Ok(Decision::DeEscalate),
            "DU" => Ok(Decision::DeEscalateUnacceptable),
            "TERMINATE" => Ok(Decision::TerminateTrial),
            other => Err(Error::InvalidArgument(format!("unknown decision symbol {other:?}"))),
        }
    }
}

/// The two fractions compared against the equivalence interval.
pub fn decision_fractions(x: u32, n: u32, a_star: f64, m: f64) -> (f64, f64) {
    let den = n as f64 + m;
    ((x as f64 + a_star) / den, (x as f64 + a_star - 1.0) / den)
}

/// Escalate, stay, or de-escalate from pseudo data `(x + a_star, n + m)`.
pub fn core_decision(x: u32, n: u32, a_star: f64, m: f64, dp: &DesignParams) -> Result<Decision> {
    if n == 0 {
        return Err(Error::InvalidArgument("decisions need n >= 1".into()));
    }
    if x > n {
        return Err(Error::InvalidArgument(format!("x ({x}) exceeds n ({n})")));
    }
    if !(a_star.is_finite() && m.is_finite() && m >= 0.0 && a_star >= 0.0 && a_star <= m + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= a* <= m, got a* = {a_star}, m = {m}"
        )));
    }

    let p_t = Fixed::from_f64(dp.p_t);
    let lower = p_t.sub(Fixed::from_f64(dp.eps1));
    let upper = p_t.add(Fixed::from_f64(dp.eps2));
    let num = Fixed::from_int(x as i64).add(Fixed::from_f64(a_star));
    let den = Fixed::from_int(n as i64).add(Fixed::from_f64(m));

    let decision = if cmp_ratio(num, den, lower) == Ordering::Less {
        Decision::Escalate
    } else if cmp_ratio(num, den, upper) != Ordering::Greater {
        Decision::Stay
    } else if cmp_ratio(num.sub(Fixed::from_int(1)), den, lower) == Ordering::Less {
        Decision::Stay
    } else {
        Decision::DeEscalate
    };
    Ok(decision)
}

/// `Pr(p > p_t)` under `beta(x + a* + 1 - a0, n - x + m - a* + 1 - b0)`,
/// i.e. the transformed prior rebuilt on a `beta(1, 1)` base and updated with
/// the current-trial data.
pub fn safety_posterior(x: u32, n: u32, prior: &DosePrior, dp: &DesignParams) -> Result<f64> {
    if x > n {
        return Err(Error::InvalidArgument(format!("x ({x}) exceeds n ({n})")));
    }
    let params = BetaParams::new(
        x as f64 + prior.a_star + 1.0 - dp.a0,
        (n - x) as f64 + prior.m - prior.a_star + 1.0 - dp.b0,
    )?;
    beta_tail(params, dp.p_t)
}

/// Per-dose counts and position of an ongoing trial. Doses are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialState {
    pub x: Vec<u32>,
    pub n: Vec<u32>,
    pub current: usize,
    pub excluded: Vec<bool>,
    pub terminated: bool,
}

impl TrialState {
    pub fn new(doses: usize) -> Self {
        Self {
            x: vec![0; doses],
            n: vec![0; doses],
            current: 0,
            excluded: vec![false; doses],
            terminated: false,
        }
    }

    pub fn doses(&self) -> usize {
        self.n.len()
    }

    pub fn total_patients(&self) -> u32 {
        self.n.iter().sum()
    }

    pub fn total_dlts(&self) -> u32 {
        self.x.iter().sum()
    }

    /// Highest dose still open to enrolment.
    pub fn highest_open(&self) -> Option<usize> {
        match self.excluded.iter().position(|&e| e) {
            Some(0) => None,
            Some(d) => Some(d - 1),
            None => self.doses().checked_sub(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let doses = self.doses();
        if doses == 0 {
            return Err(Error::InvalidState("trial has no doses".into()));
        }
        if self.x.len() != doses || self.excluded.len() != doses {
            return Err(Error::InvalidState("per-dose vectors differ in length".into()));
        }
        if let Some(d) = (0..doses).find(|&d| self.x[d] > self.n[d]) {
            return Err(Error::InvalidState(format!(
                "dose {}: {} DLTs among {} patients",
                d + 1,
                self.x[d],
                self.n[d]
            )));
        }
        if self.excluded.windows(2).any(|w| w[0] && !w[1]) {
            return Err(Error::InvalidState("excluded doses must be upward-closed".into()));
        }
        if self.current >= doses {
            return Err(Error::InvalidState(format!("current dose {} out of range", self.current + 1)));
        }
        if !self.terminated && self.excluded[self.current] {
            return Err(Error::InvalidState("current dose is excluded".into()));
        }
        Ok(())
    }

    /// Adds a cohort outcome at the current dose.
    pub fn record_cohort(&mut self, dlts: u32, size: u32) -> Result<()> {
        if self.terminated {
            return Err(Error::Terminated);
        }
        if dlts > size {
            return Err(Error::InvalidArgument(format!("{dlts} DLTs in a cohort of {size}")));
        }
        self.x[self.current] += dlts;
        self.n[self.current] += size;
        Ok(())
    }

    fn exclude_from(&mut self, dose: usize) {
        for e in &mut self.excluded[dose..] {
            *e = true;
        }
    }
}

/// Decides the next move after a cohort at the current dose and applies it
/// to `state`.
///
/// The exclusion rule is checked first; after that the returned decision
/// already includes the boundary overrides (no escalation past the highest
/// open dose, no de-escalation below dose 1).
pub fn next_action(
    state: &mut TrialState,
    priors: &[DosePrior],
    dp: &DesignParams,
) -> Result<Decision> {
    if state.terminated {
        return Err(Error::Terminated);
    }
    state.validate()?;
    if priors.len() != state.doses() {
        return Err(Error::InvalidArgument(format!(
            "{} priors for {} doses",
            priors.len(),
            state.doses()
        )));
    }
    let d = state.current;
    let (x, n) = (state.x[d], state.n[d]);
    if n == 0 {
        return Err(Error::InvalidState(format!("no patients treated at dose {}", d + 1)));
    }

    if safety_posterior(x, n, &priors[d], dp)? > dp.xi {
        state.exclude_from(d);
        if d == 0 {
            state.terminated = true;
            return Ok(Decision::TerminateTrial);
        }
        state.current = d - 1;
        return Ok(Decision::DeEscalateUnacceptable);
    }

    let decision = match core_decision(x, n, priors[d].a_star, priors[d].m, dp)? {
        Decision::Escalate if state.highest_open().is_some_and(|top| d < top) => {
            state.current = d + 1;
            Decision::Escalate
        }
        Decision::DeEscalate if d > 0 => {
            state.current = d - 1;
            Decision::DeEscalate
        }
        _ => Decision::Stay,
    };
    Ok(decision)
}

/// Decisions for every `(n, x)` with `1 <= n <= table_cap`, `0 <= x <= n` at
/// one dose. Boundary overrides are position dependent and not included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTable {
    /// 1-based dose label.
    pub dose: usize,
    pub table_cap: u32,
    /// `rows[n - 1][x]`.
    pub rows: Vec<Vec<Decision>>,
}

impl DecisionTable {
    pub fn get(&self, n: u32, x: u32) -> Option<Decision> {
        if n == 0 {
            return None;
        }
        self.rows.get(n as usize - 1)?.get(x as usize).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, Decision)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(x, &d)| (i as u32 + 1, x as u32, d))
        })
    }

    pub fn count(&self, decision: Decision) -> usize {
        self.cells().filter(|&(_, _, d)| d == decision).count()
    }

    /// Rows are `n`, columns are `x`; cells with `x > n` are blank.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let cap = self.table_cap as usize;
        let mut header = vec!["n".to_string()];
        header.extend((0..=cap).map(|x| x.to_string()));
        writer.write_record(&header).expect("in-memory write");
        for (i, row) in self.rows.iter().enumerate() {
            let mut record = vec![(i + 1).to_string()];
            record.extend((0..=cap).map(|x| row.get(x).map_or("", |d| d.symbol()).to_string()));
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn from_csv(dose: usize, text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("decision table CSV: {msg}"));
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.get(0) != Some("n") || header.len() < 2 {
            return Err(bad("header must start with n".into()));
        }
        let table_cap = header.len() as u32 - 2;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let n: u32 = record[0].parse().map_err(|_| bad(format!("bad n {:?}", &record[0])))?;
            if n as usize != i + 1 {
                return Err(bad(format!("row {} labelled n = {n}", i + 1)));
            }
            let row = (0..=n as usize)
                .map(|x| record.get(x + 1).unwrap_or("").parse::<Decision>())
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if rows.len() != table_cap as usize {
            return Err(bad(format!("{} rows for cap {table_cap}", rows.len())));
        }
        Ok(Self { dose, table_cap, rows })
    }
}

/// Tabulates one dose; cells whose safety posterior exceeds `xi` become `DU`.
pub fn build_table(dose: usize, prior: &DosePrior, dp: &DesignParams) -> Result<DecisionTable> {
    let rows = (1..=dp.table_cap)
        .map(|n| {
            (0..=n)
                .map(|x| {
                    if safety_posterior(x, n, prior, dp)? > dp.xi {
                        Ok(Decision::DeEscalateUnacceptable)
                    } else {
                        core_decision(x, n, prior.a_star, prior.m, dp)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecisionTable { dose, table_cap: dp.table_cap, rows })
}

/// One table per dose, labelled 1..=D.
pub fn build_tables(priors: &[DosePrior], dp: &DesignParams) -> Result<Vec<DecisionTable>> {
    priors
        .iter()
        .enumerate()
        .map(|(d, prior)| build_table(d + 1, prior, dp))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::vague_priors;

    fn no_borrowing() -> DosePrior {
        DosePrior { a_star: 0.0, m: 0.0, p_star: 0.0, omega: 0.0 }
    }

    #[test]
    fn core_decision_examples() {
        let dp = DesignParams::default();
        assert_eq!(core_decision(0, 3, 0.0, 0.0, &dp).unwrap(), Decision::Escalate);
        assert_eq!(core_decision(2, 3, 0.0, 0.0, &dp).unwrap(), Decision::DeEscalate);
        assert_eq!(core_decision(1, 3, 0.0, 0.0, &dp).unwrap(), Decision::Stay);
        assert_eq!(core_decision(1, 3, 1.078, 7.0, &dp).unwrap(), Decision::Escalate);
        let (q1, q2) = decision_fractions(1, 3, 1.078, 7.0);
        assert!((q1 - 0.2078).abs() < 1e-12 && (q2 - 0.1078).abs() < 1e-12);
    }

    #[test]
    fn interval_endpoints_count_as_inside() {
        let dp = DesignParams::default();
        // 1/4 sits on the lower endpoint, 7/20 on the upper one.
        assert_eq!(core_decision(1, 4, 0.0, 0.0, &dp).unwrap(), Decision::Stay);
        assert_eq!(core_decision(7, 20, 0.0, 0.0, &dp).unwrap(), Decision::Stay);
        // q1 above, q2 = 1/4 on the endpoint: not below, so de-escalate.
        assert_eq!(core_decision(2, 4, 0.0, 0.0, &dp).unwrap(), Decision::DeEscalate);
    }

    #[test]
    fn core_decision_rejects_bad_counts() {
        let dp = DesignParams::default();
        assert!(core_decision(0, 0, 0.0, 0.0, &dp).is_err());
        assert!(core_decision(4, 3, 0.0, 0.0, &dp).is_err());
        assert!(core_decision(1, 3, 2.0, 1.0, &dp).is_err());
    }

    #[test]
    fn safety_posterior_closed_form() {
        let dp = DesignParams { a0: f64::MIN_POSITIVE, b0: f64::MIN_POSITIVE, ..Default::default() };
        let tail = safety_posterior(3, 3, &no_borrowing(), &dp).unwrap();
        assert!((tail - 0.9919).abs() < 1e-10);
    }

    #[test]
    fn terminate_at_dose_one() {
        let dp = DesignParams::default();
        let priors = vague_priors(5, &dp);
        let mut state = TrialState::new(5);
        state.record_cohort(3, 3).unwrap();
        assert_eq!(next_action(&mut state, &priors, &dp).unwrap(), Decision::TerminateTrial);
        assert!(state.terminated);
        assert!(state.excluded.iter().all(|&e| e));
        assert_eq!(next_action(&mut state, &priors, &dp), Err(Error::Terminated));
    }

    #[test]
    fn escalation_overrides() {
        let dp = DesignParams::default();
        let priors = vague_priors(3, &dp);

        let mut top = TrialState::new(3);
        top.current = 2;
        top.record_cohort(0, 3).unwrap();
        assert_eq!(next_action(&mut top, &priors, &dp).unwrap(), Decision::Stay);
        assert_eq!(top.current, 2);

        let mut blocked = TrialState::new(3);
        blocked.excluded = vec![false, true, true];
        blocked.record_cohort(0, 3).unwrap();
        assert_eq!(next_action(&mut blocked, &priors, &dp).unwrap(), Decision::Stay);
        assert_eq!(blocked.current, 0);
    }

    #[test]
    fn de_escalation_at_dose_one_stays() {
        let dp = DesignParams::default();
        let priors = vague_priors(3, &dp);
        let mut state = TrialState::new(3);
        state.record_cohort(2, 3).unwrap();
        // tail of beta(3, 2) at 0.3 is below 0.95, core decision is D.
        assert_eq!(next_action(&mut state, &priors, &dp).unwrap(), Decision::Stay);
        assert_eq!(state.current, 0);
    }

    #[test]
    fn exclusion_above_dose_one() {
        let dp = DesignParams::default();
        let priors = vague_priors(4, &dp);
        let mut state = TrialState::new(4);
        state.current = 2;
        state.record_cohort(3, 3).unwrap();
        assert_eq!(
            next_action(&mut state, &priors, &dp).unwrap(),
            Decision::DeEscalateUnacceptable
        );
        assert_eq!(state.excluded, vec![false, false, true, true]);
        assert_eq!(state.current, 1);
        assert_eq!(state.highest_open(), Some(1));
    }

    #[test]
    fn empty_current_dose_is_rejected() {
        let dp = DesignParams::default();
        let priors = vague_priors(2, &dp);
        let mut state = TrialState::new(2);
        assert!(matches!(
            next_action(&mut state, &priors, &dp),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn zero_borrowing_table_cells() {
        let dp = DesignParams::default();
        let table = build_table(1, &vague_priors(1, &dp)[0], &dp).unwrap();
        assert_eq!(table.get(3, 1), Some(Decision::Stay));
        assert_eq!(table.get(3, 3), Some(Decision::DeEscalateUnacceptable));
        assert_eq!(table.get(3, 0), Some(Decision::Escalate));
        assert_eq!(table.get(0, 0), None);
        assert_eq!(table.cells().count(), 135);
    }

    #[test]
    fn csv_round_trip() {
        let dp = DesignParams::default();
        let prior = DosePrior { a_star: 3.5, m: 4.0, p_star: 0.875, omega: 1.0 };
        let table = build_table(5, &prior, &dp).unwrap();
        let text = table.to_csv();
        assert!(text.starts_with("n,0,1,2"));
        assert_eq!(DecisionTable::from_csv(5, &text).unwrap(), table);
        assert!(DecisionTable::from_csv(5, "n,0\n1,X\n").is_err());
    }

    #[test]
    fn symbols_round_trip() {
        for d in [
            Decision::Escalate,
            Decision::Stay,
            Decision::DeEscalate,
            Decision::DeEscalateUnacceptable,
            Decision::TerminateTrial,
        ] {
            assert_eq!(d.symbol().parse::<Decision>().unwrap(), d);
            assert_eq!(serde_json::to_string(&d).unwrap(), format!("\"{}\"", d.symbol()));
        }
    }
}
