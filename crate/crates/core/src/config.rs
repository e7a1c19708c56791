//! Versioned JSON run configuration shared by the command line and the
//! session service.

use serde::{Deserialize, Serialize};

use crate::decision::TrialState;
use crate::error::{Error, Result};
use crate::params::DesignParams;
use crate::prior::{HistoricalData, PowerParams};
use crate::sim::{Design, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

/// Master seed when neither the config nor the caller supplies one.
pub const DEFAULT_SEED: u64 = 20_240_601;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Scenario entry; `history` overrides the top-level history for this scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    pub true_probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistoricalData>,
}

/// Trial data for one-shot decisions and MTD selection; doses are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub x: Vec<u32>,
    pub n: Vec<u32>,
    pub current_dose: usize,
    /// Lowest excluded dose, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded_from: Option<usize>,
}

impl StateConfig {
    pub fn to_state(&self) -> Result<TrialState> {
        let doses = self.n.len();
        if self.current_dose == 0 || self.current_dose > doses {
            return Err(Error::InvalidState(format!(
                "current_dose {} outside 1..={doses}",
                self.current_dose
            )));
        }
        let mut excluded = vec![false; doses];
        if let Some(from) = self.excluded_from {
            if from == 0 || from > doses {
                return Err(Error::InvalidState(format!("excluded_from {from} outside 1..={doses}")));
            }
            excluded[from - 1..].iter_mut().for_each(|e| *e = true);
        }
        let state = TrialState {
            x: self.x.clone(),
            n: self.n.clone(),
            current: self.current_dose - 1,
            excluded,
            terminated: false,
        };
        state.validate()?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub design: DesignParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistoricalData>,
    /// Fixed power parameters; calibration is skipped when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<Design>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_scenarios: Option<usize>,
    /// Number of doses for random scenarios when no history fixes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doses: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<u32>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            design: DesignParams::default(),
            history: None,
            omega: None,
            scenarios: Vec::new(),
            state: None,
            reps: None,
            seed: None,
            designs: None,
            random_scenarios: None,
            doses: None,
            sizes: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.design.validate()?;
        if let Some(hist) = &self.history {
            hist.validate()?;
        }
        if let Some(omega) = &self.omega {
            PowerParams::new(omega.clone())?;
            let doses = self.history.as_ref().map_or(omega.len(), HistoricalData::doses);
            if omega.len() != doses {
                return Err(Error::InvalidArgument(format!("{} power parameters for {doses} doses", omega.len())));
            }
        }
        for s in &self.scenarios {
            Scenario::new(s.label.clone(), s.true_probs.clone())?;
            if let Some(h) = &s.history {
                h.validate()?;
                if h.doses() != s.true_probs.len() {
                    return Err(Error::InvalidArgument(format!(
                        "scenario {:?}: history covers {} doses, truth {}",
                        s.label,
                        h.doses(),
                        s.true_probs.len()
                    )));
                }
            }
        }
        if let Some(state) = &self.state {
            state.to_state()?;
        }
        if self.reps == Some(0) {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if let Some(sizes) = &self.sizes {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::InvalidArgument("sizes must be non-empty and positive".into()));
            }
        }
        Ok(())
    }

    /// History for `doses` doses: the configured one, or an empty history.
    pub fn history_or_empty(&self, doses: usize) -> Result<HistoricalData> {
        match &self.history {
            Some(h) if h.doses() == doses => Ok(h.clone()),
            Some(h) => Err(Error::InvalidArgument(format!(
                "history covers {} doses, expected {doses}",
                h.doses()
            ))),
            None => Ok(HistoricalData::empty(doses)),
        }
    }
}
