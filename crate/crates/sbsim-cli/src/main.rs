//! Operator entry point: validate configurations, run rollouts, evaluate
//! fidelity against telemetry, and calibrate parameters.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime/data error,
//! 4 degenerate calibration (every candidate failed).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "sbsim", version, about = "Calibratable building-thermal simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and everything it references; exit 0 if valid.
    Validate { manifest: PathBuf },
    /// Roll the simulator forward and write the trajectory and meter summary.
    Run {
        manifest: PathBuf,
        /// Number of five-minute steps.
        #[arg(long)]
        steps: usize,
        /// Simulation seed (overrides SBSIM_SEED and the manifest).
        #[arg(long)]
        seed: Option<u64>,
        /// Ambient series CSV: `timestamp,ambient_temperature_k`.
        #[arg(long)]
        ambient: PathBuf,
        /// `constant <supply_water_K> <supply_air_K>` or `schedule <file>`.
        #[arg(long, num_args = 2..=3)]
        policy: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score N-step prediction fidelity against telemetry and render
    /// drift/heatmap artifacts.
    Eval {
        manifest: PathBuf,
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search the parameter box for the best N-step fidelity.
    Calibrate {
        manifest: PathBuf,
        #[arg(long)]
        telemetry: PathBuf,
        /// Calibration spec file (`param`, `budget`, `seed`, `strategy`,
        /// `objective_interval`, `validation_interval` lines).
        #[arg(long)]
        spec: PathBuf,
        /// Parallel evaluations for the quasirandom strategy.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { manifest } => commands::validate(&manifest),
        Command::Run {
            manifest,
            steps,
            seed,
            ambient,
            policy,
            out,
        } => commands::run(&manifest, steps, seed, &ambient, &policy, &out),
        Command::Eval {
            manifest,
            telemetry,
            n,
            out,
        } => commands::eval(&manifest, &telemetry, n, &out),
        Command::Calibrate {
            manifest,
            telemetry,
            spec,
            jobs,
            out,
        } => commands::calibrate(&manifest, &telemetry, &spec, jobs, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {:#}", error.message);
            ExitCode::from(error.code)
        }
    }
}
