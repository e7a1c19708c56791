mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Hi3+3 dose-finding: calibration, decision tables, simulation, and
/// trial conduct.
#[derive(Parser)]
#[command(name = "hi3", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; falls back to the config, then HI3_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the per-dose power parameters from the history.
    Calibrate,
    /// Write one decision-table CSV per dose plus tables.json.
    Tables,
    /// Simulate operating characteristics.
    Simulate {
        #[arg(long)]
        reps: Option<u64>,
        /// Comma-separated designs, e.g. hi3+3,i3+3.
        #[arg(long, value_delimiter = ',')]
        designs: Option<Vec<String>>,
        /// Generate this many random scenarios instead of the configured ones.
        #[arg(long)]
        random_scenarios: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<u32>>,
    },
    /// Decide the next move for the configured trial state.
    Decide,
    /// Select the MTD for the configured trial state.
    SelectMtd,
    /// Run the session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Session directory.
        #[arg(long, default_value = "sessions")]
        data: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = &cli.common;
    let result = match cli.command {
        Command::Calibrate => commands::calibrate(common),
        Command::Tables => commands::tables(common),
        Command::Simulate { reps, designs, random_scenarios, sizes } => {
            commands::simulate(common, commands::SimulateFlags { reps, designs, random_scenarios, sizes })
        }
        Command::Decide => commands::decide(common),
        Command::SelectMtd => commands::select_mtd(common),
        Command::Serve { addr, data } => commands::serve(addr, data),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hi3: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
