//! Trial sessions: calibrated priors plus an append-only cohort log whose
//! fold through [`hi3::next_action`] is the trial state.

use hi3::calibration::{evaluate_conditions, ConditionReport};
use hi3::config::{DEFAULT_SEED, SCHEMA_VERSION};
use hi3::sim::calibration_seed;
use hi3::{
    build_tables, calibrate_omegas, next_action, select_mtd, transformed_prior, Decision, DecisionTable, DesignParams,
    DosePrior, HistoricalData, PowerParams, TrialState,
};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

const DEFAULT_DOSES: usize = 5;

/// Body of `POST /sessions`; the same keys as the run configuration.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub design: DesignParams,
    #[serde(default)]
    pub history: Option<HistoricalData>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Dose count when no history is given.
    #[serde(default)]
    pub doses: Option<usize>,
}

/// Body of `POST /sessions/{id}/cohorts`. `dose` is 1-based; `seq`, when
/// present, must equal the number of cohorts already logged.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortInput {
    pub dose: usize,
    pub x: u32,
    pub n: u32,
    #[serde(default)]
    pub seq: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: usize,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
    pub dose: usize,
    pub x: u32,
    pub n: u32,
    pub decision: Decision,
    /// Dose for the next cohort, or `None` once the trial has stopped.
    pub next_dose: Option<usize>,
}

/// Persisted session document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    pub id: String,
    pub created_ms: u64,
    pub design: DesignParams,
    pub history: HistoricalData,
    pub seed: u64,
    pub omega: Vec<f64>,
    pub priors: Vec<DosePrior>,
    pub state: TrialState,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateView {
    pub x: Vec<u32>,
    pub n: Vec<u32>,
    pub current_dose: usize,
    pub excluded: Vec<bool>,
    pub terminated: bool,
    pub complete: bool,
    pub total_patients: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct MtdView {
    pub selected_dose: Option<usize>,
    pub p_tilde_power: Vec<Option<f64>>,
    pub p_tilde_vague: Vec<Option<f64>>,
    pub d_safe: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableView {
    pub dose: usize,
    pub rows: Vec<Vec<Decision>>,
    pub csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationView {
    pub omega: Vec<f64>,
    pub dess: Vec<f64>,
    pub a_star: Vec<f64>,
    pub p_star: Vec<f64>,
    pub conditions: ConditionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub id: String,
    pub design: DesignParams,
    pub history: HistoricalData,
    pub seed: u64,
    pub calibration: CalibrationView,
    pub state: StateView,
    pub log: Vec<LogEntry>,
    pub tables: Vec<TableView>,
    pub mtd: MtdView,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortResult {
    pub decision: Decision,
    pub entry: LogEntry,
    pub state: StateView,
    pub mtd: MtdView,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn is_open(state: &TrialState, dp: &DesignParams) -> bool {
    !state.terminated && state.total_patients() < dp.max_n
}

impl Session {
    pub fn create(id: String, body: CreateSession) -> ApiResult<Self> {
        if let Some(v) = body.schema_version {
            if v != SCHEMA_VERSION {
                return Err(ApiError::Validation {
                    message: format!("unsupported schema_version {v} (expected {SCHEMA_VERSION})"),
                    field: Some("schema_version".into()),
                });
            }
        }
        body.design.validate()?;
        let history = match (body.history, body.doses) {
            (Some(h), Some(d)) if h.doses() != d => {
                return Err(ApiError::Validation {
                    message: format!("history covers {} doses but doses = {d}", h.doses()),
                    field: Some("doses".into()),
                })
            }
            (Some(h), _) => h,
            (None, Some(0)) => {
                return Err(ApiError::Validation { message: "doses must be positive".into(), field: Some("doses".into()) })
            }
            (None, d) => HistoricalData::empty(d.unwrap_or(DEFAULT_DOSES)),
        };
        history.validate().map_err(|e| ApiError::Validation { message: e.to_string(), field: Some("history".into()) })?;
        if history.doses() == 0 {
            return Err(ApiError::Validation { message: "history has no doses".into(), field: Some("history".into()) });
        }
        let seed = body.seed.unwrap_or(DEFAULT_SEED);
        let (w, _) = calibrate_omegas(&history, &body.design, calibration_seed(seed))?;
        let priors = transformed_prior(&history, &w, &body.design)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            id,
            created_ms: now_ms(),
            state: TrialState::new(history.doses()),
            design: body.design,
            history,
            seed,
            omega: w.omega,
            priors,
            log: Vec::new(),
        })
    }

    pub fn is_open(&self) -> bool {
        is_open(&self.state, &self.design)
    }

    /// Applies one cohort through the decision engine and logs it.
    pub fn add_cohort(&mut self, input: &CohortInput) -> ApiResult<CohortResult> {
        if self.state.terminated {
            return Err(ApiError::Gone("trial terminated by the safety rule".into()));
        }
        if !self.is_open() {
            return Err(ApiError::Gone(format!("sample size {} reached", self.design.max_n)));
        }
        if let Some(seq) = input.seq {
            if seq != self.log.len() {
                return Err(ApiError::Conflict(format!(
                    "cohort seq {seq} does not follow the {} logged cohorts",
                    self.log.len()
                )));
            }
        }
        let current = self.state.current + 1;
        if input.dose != current {
            return Err(ApiError::Conflict(format!("cohort at dose {} but the current dose is {current}", input.dose)));
        }
        if input.n == 0 {
            return Err(ApiError::Validation { message: "cohort must have patients".into(), field: Some("n".into()) });
        }
        if input.x > input.n {
            return Err(ApiError::Validation {
                message: format!("{} DLTs among {} patients", input.x, input.n),
                field: Some("x".into()),
            });
        }
        let remaining = self.design.max_n - self.state.total_patients();
        if input.n > remaining {
            return Err(ApiError::Validation {
                message: format!("only {remaining} patients remain"),
                field: Some("n".into()),
            });
        }

        let mut state = self.state.clone();
        state.record_cohort(input.x, input.n)?;
        let decision = next_action(&mut state, &self.priors, &self.design)?;
        let entry = LogEntry {
            seq: self.log.len(),
            at_ms: now_ms(),
            dose: input.dose,
            x: input.x,
            n: input.n,
            decision,
            next_dose: is_open(&state, &self.design).then_some(state.current + 1),
        };
        self.state = state;
        self.log.push(entry.clone());
        Ok(CohortResult { decision, entry, state: self.state_view(), mtd: self.mtd_view()? })
    }

    /// Rebuilds priors and state from history, weights, and log, and checks
    /// them against the stored values.
    pub fn verify(&self) -> Result<(), String> {
        let w = PowerParams::new(self.omega.clone()).map_err(|e| e.to_string())?;
        let priors = transformed_prior(&self.history, &w, &self.design).map_err(|e| e.to_string())?;
        if priors != self.priors {
            return Err("stored priors do not match history and weights".into());
        }
        let mut state = TrialState::new(self.history.doses());
        for (i, entry) in self.log.iter().enumerate() {
            if entry.seq != i || entry.dose != state.current + 1 || !is_open(&state, &self.design) {
                return Err(format!("log entry {i} does not follow the trial"));
            }
            state.record_cohort(entry.x, entry.n).map_err(|e| e.to_string())?;
            let decision = next_action(&mut state, &self.priors, &self.design).map_err(|e| e.to_string())?;
            if decision != entry.decision {
                return Err(format!("log entry {i} records {} but replay gives {}", entry.decision, decision));
            }
        }
        if state != self.state {
            return Err("stored state differs from the replayed log".into());
        }
        Ok(())
    }

    pub fn state_view(&self) -> StateView {
        StateView {
            x: self.state.x.clone(),
            n: self.state.n.clone(),
            current_dose: self.state.current + 1,
            excluded: self.state.excluded.clone(),
            terminated: self.state.terminated,
            complete: !self.is_open(),
            total_patients: self.state.total_patients(),
        }
    }

    pub fn mtd_view(&self) -> ApiResult<MtdView> {
        let r = select_mtd(&self.state, &self.priors, &self.design)?;
        Ok(MtdView {
            selected_dose: r.selected.map(|d| d + 1),
            p_tilde_power: r.p_tilde_power,
            p_tilde_vague: r.p_tilde_vague,
            d_safe: r.d_safe.into_iter().map(|d| d + 1).collect(),
        })
    }

    pub fn tables(&self) -> ApiResult<Vec<TableView>> {
        Ok(build_tables(&self.priors, &self.design)?.into_iter().map(table_view).collect())
    }

    pub fn calibration_view(&self) -> ApiResult<CalibrationView> {
        let conditions = evaluate_conditions(&self.history, &PowerParams { omega: self.omega.clone() }, &self.design)?;
        Ok(CalibrationView {
            omega: self.omega.clone(),
            dess: self.priors.iter().map(|p| p.m).collect(),
            a_star: self.priors.iter().map(|p| p.a_star).collect(),
            p_star: self.priors.iter().map(|p| p.p_star).collect(),
            conditions,
        })
    }

    pub fn view(&self) -> ApiResult<SessionView> {
        Ok(SessionView {
            id: self.id.clone(),
            design: self.design.clone(),
            history: self.history.clone(),
            seed: self.seed,
            calibration: self.calibration_view()?,
            state: self.state_view(),
            log: self.log.clone(),
            tables: self.tables()?,
            mtd: self.mtd_view()?,
        })
    }
}

fn table_view(table: DecisionTable) -> TableView {
    TableView { dose: table.dose, csv: table.to_csv(), rows: table.rows }
}
