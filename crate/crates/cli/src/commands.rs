use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hi3::calibration::{evaluate_conditions, CalibrationWorkspace};
use hi3::config::{RunConfig, DEFAULT_SEED};
use hi3::decision::decision_fractions;
use hi3::sim::{calibration_seed, simulate_design, simulate_random_scenarios};
use hi3::{
    build_tables, calibrate_omegas, next_action, select_mtd as choose_mtd, transformed_prior, Design, DesignParams,
    DosePrior, HistoricalData, PowerParams, Scenario, SimulationSummary,
};
use serde::Serialize;

use crate::Common;

const DEFAULT_DOSES: usize = 5;
const DEFAULT_REPS: u64 = 1000;
const DEFAULT_TABLE_DIR: &str = "hi3-tables";

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<hi3::Error> for CliError {
    fn from(e: hi3::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            RunConfig::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        None => Ok(RunConfig::default()),
    }
}

/// `--seed`, then the config, then `HI3_SEED`, then the built-in default.
fn resolve_seed(common: &Common, config: &RunConfig) -> Result<u64> {
    if let Some(seed) = common.seed.or(config.seed) {
        return Ok(seed);
    }
    match std::env::var("HI3_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Input(format!("HI3_SEED {v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn dose_count(config: &RunConfig) -> usize {
    config
        .history
        .as_ref()
        .map(HistoricalData::doses)
        .or(config.omega.as_ref().map(Vec::len))
        .or(config.state.as_ref().map(|s| s.n.len()))
        .or(config.doses)
        .unwrap_or(DEFAULT_DOSES)
}

struct Calibrated {
    history: HistoricalData,
    omega: PowerParams,
    priors: Vec<DosePrior>,
    workspace: Option<CalibrationWorkspace>,
}

fn calibrated(config: &RunConfig, seed: u64) -> Result<Calibrated> {
    let history = config.history_or_empty(dose_count(config))?;
    let (omega, workspace) = match &config.omega {
        Some(w) => (PowerParams::new(w.clone())?, None),
        None => {
            let (w, ws) = calibrate_omegas(&history, &config.design, calibration_seed(seed))?;
            (w, Some(ws))
        }
    };
    let priors = transformed_prior(&history, &omega, &config.design)?;
    Ok(Calibrated { history, omega, priors, workspace })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

#[derive(Serialize)]
struct CalibrationOutput<'a> {
    seed: u64,
    design: &'a DesignParams,
    history: &'a HistoricalData,
    omega: &'a [f64],
    priors: &'a [DosePrior],
    conditions: hi3::ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    workspace: Option<&'a CalibrationWorkspace>,
}

pub fn calibrate(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let seed = resolve_seed(common, &config)?;
    let c = calibrated(&config, seed)?;
    let conditions = evaluate_conditions(&c.history, &c.omega, &config.design)?;

    let mut text = String::from("dose  omega   dess     a_star   p_star  tolerability  ceiling  retaining\n");
    for (d, (p, cond)) in c.priors.iter().zip(&conditions.doses).enumerate() {
        let yes = |b: bool| if b { "ok" } else { "FAIL" };
        writeln!(
            text,
            "{:<5} {:<7} {:<8} {:<8} {:<7} {:<13} {:<8} {}",
            d + 1,
            f4(p.omega),
            f4(p.m),
            f4(p.a_star),
            f4(p.p_star),
            format!("{} {}", f4(cond.tolerability_fraction), yes(cond.tolerability_ok)),
            yes(cond.ceiling_ok),
            yes(cond.retaining_ok),
        )
        .expect("string write");
    }
    print!("{text}");

    if let Some(dir) = &common.out {
        let output = CalibrationOutput {
            seed,
            design: &config.design,
            history: &c.history,
            omega: &c.omega.omega,
            priors: &c.priors,
            conditions,
            workspace: c.workspace.as_ref(),
        };
        let path = write_file(dir, "calibration.json", &to_json(&output))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct TablesOutput<'a> {
    seed: u64,
    omega: &'a [f64],
    priors: &'a [DosePrior],
    tables: &'a [hi3::DecisionTable],
}

pub fn tables(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let seed = resolve_seed(common, &config)?;
    let c = calibrated(&config, seed)?;
    let tables = build_tables(&c.priors, &config.design)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_TABLE_DIR));
    for table in &tables {
        let path = write_file(&dir, &format!("dose_{}.csv", table.dose), &table.to_csv())?;
        println!("{}", path.display());
    }
    let output = TablesOutput { seed, omega: &c.omega.omega, priors: &c.priors, tables: &tables };
    println!("{}", write_file(&dir, "tables.json", &to_json(&output))?.display());
    Ok(())
}

pub struct SimulateFlags {
    pub reps: Option<u64>,
    pub designs: Option<Vec<String>>,
    pub random_scenarios: Option<usize>,
    pub sizes: Option<Vec<u32>>,
}

const SUMMARY_HEADER: &str =
    "design,scenario,max_n,pcs,sel_over,sel_under,none_sel,pat_at,pat_over,pat_under,tox,pcs_se,reps,seed";

fn summary_row(s: &SimulationSummary) -> String {
    let metrics = [s.pcs, s.sel_over, s.sel_under, s.none_sel, s.pat_at, s.pat_over, s.pat_under, s.tox, s.pcs_se];
    let mut fields = vec![s.design.clone(), s.scenario.clone(), s.max_n.to_string()];
    fields.extend(metrics.iter().map(|&v| f4(v)));
    fields.push(s.reps.to_string());
    fields.push(s.seed.to_string());
    fields.join(",")
}

fn summaries_csv(rows: &[SimulationSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&summary_row(row));
        out.push('\n');
    }
    out
}

pub fn simulate(common: &Common, flags: SimulateFlags) -> Result<()> {
    let config = load_config(common)?;
    let seed = resolve_seed(common, &config)?;
    let reps = flags.reps.or(config.reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(CliError::Input("reps must be at least 1".into()));
    }
    let designs: Vec<Design> = match flags.designs {
        Some(names) => names.iter().map(|n| n.parse()).collect::<hi3::Result<_>>()?,
        None => config.designs.clone().unwrap_or_else(|| vec![Design::Hi3Plus3, Design::I3Plus3]),
    };
    if designs.is_empty() {
        return Err(CliError::Input("no designs selected".into()));
    }
    let sizes = flags.sizes.or(config.sizes.clone()).unwrap_or_else(|| vec![config.design.max_n]);
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Input("sizes must be positive".into()));
    }

    let mut rows = Vec::new();
    match flags.random_scenarios.or(config.random_scenarios) {
        Some(0) => return Err(CliError::Input("random-scenarios must be at least 1".into())),
        Some(count) => {
            let doses = config.history.as_ref().map(HistoricalData::doses).or(config.doses).unwrap_or(DEFAULT_DOSES);
            for &max_n in &sizes {
                let dp = DesignParams { max_n, ..config.design.clone() };
                let results = simulate_random_scenarios(&designs, count, doses, &dp, reps, seed)?;
                for (i, &design) in designs.iter().enumerate() {
                    let per_scenario: Vec<SimulationSummary> = results.iter().map(|(_, _, r)| r[i].clone()).collect();
                    let mean = SimulationSummary::average(design.name(), "mean", &per_scenario)
                        .expect("at least one scenario");
                    rows.extend(per_scenario);
                    rows.push(mean);
                }
            }
        }
        None => {
            if config.scenarios.is_empty() {
                return Err(CliError::Input("no scenarios configured (use --random-scenarios or a config)".into()));
            }
            for sc in &config.scenarios {
                let scenario = Scenario::new(sc.label.clone(), sc.true_probs.clone())?;
                let history = match &sc.history {
                    Some(h) => h.clone(),
                    None => config.history_or_empty(scenario.doses())?,
                };
                for &design in &designs {
                    for &max_n in &sizes {
                        let dp = DesignParams { max_n, ..config.design.clone() };
                        rows.push(simulate_design(design, &scenario, &history, &dp, reps, seed)?);
                    }
                }
            }
        }
    }

    let csv = summaries_csv(&rows);
    match &common.out {
        Some(dir) => {
            let csv_path = write_file(dir, "summary.csv", &csv)?;
            let json_path = write_file(dir, "summary.json", &to_json(&rows))?;
            println!("{}\n{}", csv_path.display(), json_path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct DecisionOutput {
    decision: hi3::Decision,
    dose: usize,
    q1: f64,
    q2: f64,
    next_dose: Option<usize>,
    excluded_from: Option<usize>,
}

pub fn decide(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let seed = resolve_seed(common, &config)?;
    let state_config = config.state.as_ref().ok_or_else(|| CliError::Input("config has no trial state".into()))?;
    let mut state = state_config.to_state()?;
    let c = calibrated(&config, seed)?;
    if c.priors.len() != state.doses() {
        return Err(CliError::Input(format!("state covers {} doses, history {}", state.doses(), c.priors.len())));
    }
    let d = state.current;
    let (q1, q2) = decision_fractions(state.x[d], state.n[d], c.priors[d].a_star, c.priors[d].m);
    let decision = next_action(&mut state, &c.priors, &config.design)?;
    let output = DecisionOutput {
        decision,
        dose: d + 1,
        q1,
        q2,
        next_dose: (!state.terminated).then_some(state.current + 1),
        excluded_from: state.excluded.iter().position(|&e| e).map(|e| e + 1),
    };
    println!("{}", decision.symbol());
    println!("q1 = {}", f4(q1));
    println!("q2 = {}", f4(q2));
    match output.next_dose {
        Some(next) => println!("next dose = {next}"),
        None => println!("next dose = none"),
    }
    if let Some(dir) = &common.out {
        write_file(dir, "decision.json", &to_json(&output))?;
    }
    Ok(())
}

pub fn select_mtd(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let seed = resolve_seed(common, &config)?;
    let state_config = config.state.as_ref().ok_or_else(|| CliError::Input("config has no trial state".into()))?;
    let state = state_config.to_state()?;
    let c = calibrated(&config, seed)?;
    let result = choose_mtd(&state, &c.priors, &config.design)?;
    match result.selected {
        Some(d) => println!("MTD = dose {}", d + 1),
        None => println!("MTD = none"),
    }
    println!("dose  p_power  p_vague  candidate");
    let fmt = |p: Option<f64>| p.map_or_else(|| "-".to_string(), f4);
    for d in 0..state.doses() {
        println!(
            "{:<5} {:<8} {:<8} {}",
            d + 1,
            fmt(result.p_tilde_power[d]),
            fmt(result.p_tilde_vague[d]),
            if result.d_safe.contains(&d) { "yes" } else { "no" }
        );
    }
    if let Some(dir) = &common.out {
        write_file(dir, "mtd.json", &to_json(&result))?;
    }
    Ok(())
}

pub fn serve(addr: std::net::SocketAddr, data: PathBuf) -> Result<()> {
    let store = hi3_service::Store::open(&data).map_err(|e| io_error(&data, e))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    eprintln!("serving on http://{addr} (sessions in {})", data.display());
    runtime
        .block_on(hi3_service::serve(addr, Arc::new(store)))
        .map_err(|e| CliError::Io(format!("{addr}: {e}")))
}
