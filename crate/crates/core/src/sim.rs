//! Monte Carlo operating characteristics.
//!
//! Every replication draws from its own ChaCha stream keyed by
//! `(seed, replication index)`, so summaries do not depend on thread count or
//! scheduling. Per-trial metrics are collected in replication order and summed
//! sequentially.

use rand::Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::calibrate_omegas;
use crate::decision::{next_action, Decision, TrialState};
use crate::error::{Error, Result};
use crate::exact::Fixed;
use crate::mtd::{select_mtd, MtdResult};
use crate::params::DesignParams;
use crate::prior::{transformed_prior, vague_priors, DosePrior, HistoricalData};

/// Sample size of simulated historical trials.
pub const HISTORICAL_SAMPLE_SIZE: u32 = 30;

/// Stream reserved for calibration randomness inside a batch.
const CALIBRATION_STREAM: u64 = u64::MAX;

const RANDOM_SCENARIO_MAX_GAP: f64 = 0.24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub label: String,
    pub true_probs: Vec<f64>,
}

impl Scenario {
    pub fn new(label: impl Into<String>, true_probs: Vec<f64>) -> Result<Self> {
        let scenario = Self { label: label.into(), true_probs };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn doses(&self) -> usize {
        self.true_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_probs.is_empty() {
            return Err(Error::InvalidArgument(format!("scenario {:?} has no doses", self.label)));
        }
        if self.true_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "scenario {:?}: probabilities must lie in [0, 1]",
                self.label
            )));
        }
        if self.true_probs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument(format!(
                "scenario {:?}: probabilities must be non-decreasing",
                self.label
            )));
        }
        Ok(())
    }
}

/// The dose(s) counted as a correct selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrueMtd {
    /// Contiguous 0-based doses; never empty.
    Doses(Vec<usize>),
    /// Every dose lies above the equivalence interval.
    None,
}

/// Doses whose truth lies in the equivalence interval; failing that, the
/// highest dose below it, or `None` when all doses are above it.
pub fn true_mtd(scenario: &Scenario, dp: &DesignParams) -> TrueMtd {
    let p_t = Fixed::from_f64(dp.p_t);
    let lower = p_t.sub(Fixed::from_f64(dp.eps1));
    let upper = p_t.add(Fixed::from_f64(dp.eps2));
    let truth: Vec<Fixed> = scenario.true_probs.iter().map(|&p| Fixed::from_f64(p)).collect();
    let inside: Vec<usize> = (0..truth.len())
        .filter(|&d| lower <= truth[d] && truth[d] <= upper)
        .collect();
    if !inside.is_empty() {
        return TrueMtd::Doses(inside);
    }
    match (0..truth.len()).rev().find(|&d| truth[d] < lower) {
        Some(d) => TrueMtd::Doses(vec![d]),
        None => TrueMtd::None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    #[serde(rename = "hi3+3")]
    Hi3Plus3,
    #[serde(rename = "i3+3")]
    I3Plus3,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::Hi3Plus3 => "hi3+3",
            Design::I3Plus3 => "i3+3",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hi3+3" | "hi33" => Ok(Design::Hi3Plus3),
            "i3+3" | "i33" => Ok(Design::I3Plus3),
            other => Err(Error::InvalidArgument(format!("unknown design {other:?}"))),
        }
    }
}

/// Final state and selection of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub state: TrialState,
    pub mtd: MtdResult,
}

/// Independent generator for replication `rep` under master `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn check_dims(scenario: &Scenario, priors: &[DosePrior]) -> Result<()> {
    scenario.validate()?;
    if priors.len() != scenario.doses() {
        return Err(Error::InvalidArgument(format!(
            "{} priors for a {}-dose scenario",
            priors.len(),
            scenario.doses()
        )));
    }
    Ok(())
}

/// Runs one trial from dose 1 until `max_n` patients or early termination.
pub fn run_trial_with_rng<R: Rng>(
    scenario: &Scenario,
    priors: &[DosePrior],
    dp: &DesignParams,
    rng: &mut R,
) -> Result<TrialOutcome> {
    check_dims(scenario, priors)?;
    let mut state = TrialState::new(scenario.doses());
    while !state.terminated && state.total_patients() < dp.max_n {
        let size = dp.cohort_size.min(dp.max_n - state.total_patients());
        let p = scenario.true_probs[state.current];
        let dlts = (0..size).filter(|_| rng.random::<f64>() < p).count() as u32;
        state.record_cohort(dlts, size)?;
        next_action(&mut state, priors, dp)?;
    }
    let mtd = select_mtd(&state, priors, dp)?;
    Ok(TrialOutcome { state, mtd })
}

/// Single trial on replication stream 0 of `seed`.
pub fn run_trial(
    scenario: &Scenario,
    priors: &[DosePrior],
    dp: &DesignParams,
    seed: u64,
) -> Result<TrialOutcome> {
    run_trial_with_rng(scenario, priors, dp, &mut replication_rng(seed, 0))
}

/// Per-trial scores; selection fields are 0/1 indicators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub correct: f64,
    pub sel_over: f64,
    pub sel_under: f64,
    pub none_sel: f64,
    pub pat_at: f64,
    pub pat_over: f64,
    pub pat_under: f64,
    pub tox: f64,
}

pub fn score_trial(outcome: &TrialOutcome, truth: &TrueMtd) -> TrialMetrics {
    let state = &outcome.state;
    let total = state.total_patients().max(1) as f64;
    let mut m = TrialMetrics { tox: state.total_dlts() as f64 / total, ..Default::default() };
    match truth {
        TrueMtd::None => {
            if outcome.mtd.selected.is_some() {
                m.sel_over = 1.0;
            } else {
                m.correct = 1.0;
            }
            m.pat_over = state.total_patients() as f64 / total;
        }
        TrueMtd::Doses(doses) => {
            let (lo, hi) = (doses[0], *doses.last().expect("non-empty"));
            match outcome.mtd.selected {
                None => m.none_sel = 1.0,
                Some(s) if s < lo => m.sel_under = 1.0,
                Some(s) if s > hi => m.sel_over = 1.0,
                Some(_) => m.correct = 1.0,
            }
            for (d, &n) in state.n.iter().enumerate() {
                let share = n as f64 / total;
                if d < lo {
                    m.pat_under += share;
                } else if d > hi {
                    m.pat_over += share;
                } else {
                    m.pat_at += share;
                }
            }
        }
    }
    m
}

/// Mean operating characteristics over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub design: String,
    pub scenario: String,
    pub max_n: u32,
    pub pcs: f64,
    pub sel_over: f64,
    pub sel_under: f64,
    pub none_sel: f64,
    pub pat_at: f64,
    pub pat_over: f64,
    pub pat_under: f64,
    pub tox: f64,
    /// Binomial standard error of `pcs`.
    pub pcs_se: f64,
    pub reps: u64,
    pub seed: u64,
}

impl SimulationSummary {
    fn from_metrics(design: Design, scenario: &str, dp: &DesignParams, metrics: &[TrialMetrics], seed: u64) -> Self {
        let reps = metrics.len() as f64;
        let mean = |f: fn(&TrialMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / reps;
        let pcs = mean(|m| m.correct);
        Self {
            design: design.name().to_string(),
            scenario: scenario.to_string(),
            max_n: dp.max_n,
            pcs,
            sel_over: mean(|m| m.sel_over),
            sel_under: mean(|m| m.sel_under),
            none_sel: mean(|m| m.none_sel),
            pat_at: mean(|m| m.pat_at),
            pat_over: mean(|m| m.pat_over),
            pat_under: mean(|m| m.pat_under),
            tox: mean(|m| m.tox),
            pcs_se: (pcs * (1.0 - pcs) / reps).sqrt(),
            reps: metrics.len() as u64,
            seed,
        }
    }

    /// Unweighted mean of several summaries (e.g. across random scenarios).
    pub fn average(design: &str, label: &str, rows: &[SimulationSummary]) -> Option<Self> {
        let first = rows.first()?;
        let k = rows.len() as f64;
        let mean = |f: fn(&SimulationSummary) -> f64| rows.iter().map(f).sum::<f64>() / k;
        Some(Self {
            design: design.to_string(),
            scenario: label.to_string(),
            max_n: first.max_n,
            pcs: mean(|s| s.pcs),
            sel_over: mean(|s| s.sel_over),
            sel_under: mean(|s| s.sel_under),
            none_sel: mean(|s| s.none_sel),
            pat_at: mean(|s| s.pat_at),
            pat_over: mean(|s| s.pat_over),
            pat_under: mean(|s| s.pat_under),
            tox: mean(|s| s.tox),
            pcs_se: (rows.iter().map(|s| s.pcs_se * s.pcs_se).sum::<f64>()).sqrt() / k,
            reps: rows.iter().map(|s| s.reps).sum(),
            seed: first.seed,
        })
    }
}

/// Seed handed to the calibration for master `seed`; independent of every
/// replication stream.
pub fn calibration_seed(seed: u64) -> u64 {
    replication_rng(seed, CALIBRATION_STREAM).next_u64()
}

/// Priors for a design: calibrated borrowing for Hi3+3, the vague prior for
/// i3+3.
pub fn design_priors(
    design: Design,
    hist: &HistoricalData,
    dp: &DesignParams,
    seed: u64,
) -> Result<Vec<DosePrior>> {
    match design {
        Design::Hi3Plus3 => {
            let (w, _) = calibrate_omegas(hist, dp, calibration_seed(seed))?;
            transformed_prior(hist, &w, dp)
        }
        Design::I3Plus3 => Ok(vague_priors(hist.doses(), dp)),
    }
}

fn simulate_with_priors(
    design: Design,
    scenario: &Scenario,
    priors: &[DosePrior],
    dp: &DesignParams,
    reps: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    dp.validate()?;
    check_dims(scenario, priors)?;
    let truth = true_mtd(scenario, dp);
    let metrics = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let outcome = run_trial_with_rng(scenario, priors, dp, &mut replication_rng(seed, rep))?;
            Ok(score_trial(&outcome, &truth))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationSummary::from_metrics(design, &scenario.label, dp, &metrics, seed))
}

/// Hi3+3 operating characteristics: calibrates once from `hist`, then runs
/// `reps` independent trials.
pub fn simulate_batch(
    scenario: &Scenario,
    hist: &HistoricalData,
    dp: &DesignParams,
    reps: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    simulate_design(Design::Hi3Plus3, scenario, hist, dp, reps, seed)
}

pub fn simulate_design(
    design: Design,
    scenario: &Scenario,
    hist: &HistoricalData,
    dp: &DesignParams,
    reps: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    if hist.doses() != scenario.doses() {
        return Err(Error::InvalidArgument(format!(
            "history covers {} doses, scenario {}",
            hist.doses(),
            scenario.doses()
        )));
    }
    let priors = design_priors(design, hist, dp, seed)?;
    simulate_with_priors(design, scenario, &priors, dp, reps, seed)
}

/// Hi3+3 at each sample size, everything else held fixed.
pub fn efficiency_sweep(
    scenario: &Scenario,
    hist: &HistoricalData,
    dp: &DesignParams,
    sizes: &[u32],
    reps: u64,
    seed: u64,
) -> Result<Vec<SimulationSummary>> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("at least one sample size is required".into()));
    }
    let priors = design_priors(Design::Hi3Plus3, hist, dp, seed)?;
    sizes
        .iter()
        .map(|&max_n| {
            let dp = DesignParams { max_n, ..dp.clone() };
            simulate_with_priors(Design::Hi3Plus3, scenario, &priors, &dp, reps, seed)
        })
        .collect()
}

/// One i3+3 trial of [`HISTORICAL_SAMPLE_SIZE`] patients under `truth`;
/// returns its per-dose counts.
pub fn generate_historical_data(truth: &Scenario, dp: &DesignParams, seed: u64) -> Result<HistoricalData> {
    let dp = DesignParams { max_n: HISTORICAL_SAMPLE_SIZE, ..dp.clone() };
    let priors = vague_priors(truth.doses(), &dp);
    let outcome = run_trial(truth, &priors, &dp, seed)?;
    Ok(HistoricalData {
        x: outcome.state.x.iter().map(|&x| x as f64).collect(),
        n: outcome.state.n.iter().map(|&n| n as f64).collect(),
    })
}

/// Monotone random scenarios whose MTD location is uniform over the doses
/// and the no-MTD case.
///
/// The MTD's truth is uniform inside the equivalence interval. The dose
/// just above starts uniformly within `RANDOM_SCENARIO_MAX_GAP` over the
/// interval, and the dose just below within the same distance under it;
/// further doses step by uniform gaps on `[0, RANDOM_SCENARIO_MAX_GAP)`.
pub fn generate_random_scenarios(
    count: usize,
    doses: usize,
    dp: &DesignParams,
    seed: u64,
) -> Result<Vec<Scenario>> {
    if count == 0 || doses == 0 {
        return Err(Error::InvalidArgument("need at least one scenario and one dose".into()));
    }
    dp.validate()?;
    let (lower, upper) = (dp.ei_lower(), dp.ei_upper());
    let gap = RANDOM_SCENARIO_MAX_GAP;
    let floor = 0.005;
    let ceiling = 0.995;

    (0..count)
        .map(|i| {
            let mut rng = replication_rng(seed, i as u64);
            // Location `doses` is the no-MTD case.
            let location = rng.random_range(0..=doses);
            let mut p = vec![0.0; doses];
            let first_above = if location < doses {
                p[location] = lower + rng.random::<f64>() * (upper - lower);
                for d in (0..location).rev() {
                    p[d] = if d + 1 == location {
                        let v = lower - rng.random::<f64>() * gap;
                        v.max(floor).min(lower - 1e-6)
                    } else {
                        (p[d + 1] - rng.random::<f64>() * gap).max(floor)
                    };
                }
                location + 1
            } else {
                0
            };
            for d in first_above..doses {
                p[d] = if d == first_above {
                    upper + (1.0 - rng.random::<f64>()) * gap
                } else {
                    p[d - 1] + rng.random::<f64>() * gap
                }
                .min(ceiling);
            }
            Scenario::new(format!("random-{}", i + 1), p)
        })
        .collect()
}

/// Per-scenario summaries over random scenarios, each with its own
/// simulated historical trial on the same truth.
pub fn simulate_random_scenarios(
    designs: &[Design],
    count: usize,
    doses: usize,
    dp: &DesignParams,
    reps: u64,
    seed: u64,
) -> Result<Vec<(Scenario, HistoricalData, Vec<SimulationSummary>)>> {
    let scenarios = generate_random_scenarios(count, doses, dp, seed)?;
    scenarios
        .into_par_iter()
        .enumerate()
        .map(|(i, scenario)| {
            let scenario_seed = replication_rng(seed ^ 0x5eed_5eed_5eed_5eed, i as u64).next_u64();
            let hist = generate_historical_data(&scenario, dp, scenario_seed)?;
            let rows = designs
                .iter()
                .map(|&design| simulate_design(design, &scenario, &hist, dp, reps, scenario_seed))
                .collect::<Result<Vec<_>>>()?;
            Ok((scenario, hist, rows))
        })
        .collect()
}

/// Cohort-by-cohort path of a trial, for tracing and tests.
pub fn trial_path<R: Rng>(
    scenario: &Scenario,
    priors: &[DosePrior],
    dp: &DesignParams,
    rng: &mut R,
) -> Result<Vec<(usize, u32, Decision)>> {
    check_dims(scenario, priors)?;
    let mut state = TrialState::new(scenario.doses());
    let mut path = Vec::new();
    while !state.terminated && state.total_patients() < dp.max_n {
        let size = dp.cohort_size.min(dp.max_n - state.total_patients());
        let dose = state.current;
        let dlts = (0..size).filter(|_| rng.random::<f64>() < scenario.true_probs[dose]).count() as u32;
        state.record_cohort(dlts, size)?;
        path.push((dose, dlts, next_action(&mut state, priors, dp)?));
    }
    Ok(path)
}
