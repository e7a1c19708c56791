//! Hi3+3 phase I dose-finding design.
//!
//! Historical DLT data enter as per-dose power priors whose weights are
//! calibrated so that borrowing rarely makes decisions more aggressive than
//! i3+3, never exceeds an effective sample size of `K`, and never rules a
//! dose out before the trial starts. Decisions are pretabulated per dose.

pub mod calibration;
pub mod config;
pub mod decision;
pub mod error;
mod exact;
pub mod mtd;
pub mod params;
pub mod prior;
pub mod sim;
pub mod stats;

pub use calibration::{calibrate_omegas, CalibrationWorkspace, ConditionReport};
pub use decision::{build_table, build_tables, core_decision, next_action, Decision, DecisionTable, TrialState};
pub use error::{Error, Result};
pub use mtd::{select_mtd, MtdResult};
pub use params::DesignParams;
pub use prior::{transformed_prior, DosePrior, HistoricalData, PowerParams};
pub use sim::{Design, Scenario, SimulationSummary};
