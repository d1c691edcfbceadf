//! Subcommand implementations. Every output file is deterministic given the
//! flags and seeds; timing goes to stderr only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use sbsim::artifacts::{DriftSeriesArtifact, HeatmapArtifact};
use sbsim::building::{BuildingConfig, ThetaParams};
use sbsim::calib::{
    calibrate_with_jobs, n_step_eval, n_step_eval_traced, CalibrationSpec, TelemetrySeries,
};
use sbsim::engine::{Action, Observation, RewardBreakdown, Simulator, STEP_SECONDS};

pub struct CliError {
    pub code: u8,
    pub message: anyhow::Error,
}

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 3;
const DEGENERATE_CALIBRATION: u8 = 4;

fn config_error(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: CONFIG_ERROR,
        message: e.into(),
    }
}

fn runtime_error(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: RUNTIME_ERROR,
        message: e.into(),
    }
}

fn load_config(manifest: &Path, seed_flag: Option<u64>) -> Result<BuildingConfig, CliError> {
    let mut config = BuildingConfig::load(manifest).map_err(config_error)?;
    // precedence: --seed, then SBSIM_SEED, then the manifest
    let env_seed = std::env::var("SBSIM_SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok());
    if let Some(seed) = seed_flag.or(env_seed) {
        config.seed = seed;
    }
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime_error)
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime_error)
}

pub fn validate(manifest: &Path) -> Result<(), CliError> {
    let config = load_config(manifest, None)?;
    Simulator::assemble(&config).map_err(config_error)?;
    println!(
        "ok: {} floor(s), {} zone(s), {} device(s)",
        config.floors.len(),
        config.zones.len(),
        config.devices.len()
    );
    Ok(())
}

/// Ambient CSV: header `timestamp,ambient_temperature_k`.
fn load_ambient(path: &Path) -> Result<Vec<(DateTime<Utc>, f64)>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(runtime_error)?;
    let mut series = Vec::new();
    for row in reader.records() {
        let row = row.map_err(runtime_error)?;
        let timestamp = parse_timestamp(&row[0])?;
        let value: f64 = row[1]
            .parse()
            .map_err(|_| runtime_error(anyhow!("`{}` is not a number", &row[1])))?;
        series.push((timestamp, value));
    }
    if series.is_empty() {
        return Err(runtime_error(anyhow!(
            "{}: ambient series is empty",
            path.display()
        )));
    }
    series.sort_by_key(|(t, _)| *t);
    Ok(series)
}

/// Schedule CSV: header
/// `timestamp,supply_water_setpoint_k,supply_air_setpoint_k`.
fn load_schedule(path: &Path) -> Result<Vec<(DateTime<Utc>, Action)>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(runtime_error)?;
    let mut series = Vec::new();
    for row in reader.records() {
        let row = row.map_err(runtime_error)?;
        let timestamp = parse_timestamp(&row[0])?;
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| runtime_error(anyhow!("`{s}` is not a number")))
        };
        series.push((
            timestamp,
            Action {
                supply_water_setpoint: parse(&row[1])?,
                supply_air_setpoint: parse(&row[2])?,
            },
        ));
    }
    series.sort_by_key(|(t, _)| *t);
    Ok(series)
}

fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, CliError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| runtime_error(anyhow!("`{text}` is not an ISO-8601 timestamp")))
}

fn parse_policy(
    policy: &[String],
    start: DateTime<Utc>,
    steps: usize,
) -> Result<Vec<(DateTime<Utc>, Action)>, CliError> {
    match policy.first().map(String::as_str) {
        Some("constant") if policy.len() == 3 => {
            let parse = |s: &str| -> Result<f64, CliError> {
                s.parse()
                    .map_err(|_| config_error(anyhow!("`{s}` is not a temperature")))
            };
            let action = Action {
                supply_water_setpoint: parse(&policy[1])?,
                supply_air_setpoint: parse(&policy[2])?,
            };
            Ok((0..steps)
                .map(|k| {
                    (
                        start + chrono::Duration::seconds(STEP_SECONDS * k as i64),
                        action,
                    )
                })
                .collect())
        }
        Some("schedule") if policy.len() == 2 => load_schedule(&PathBuf::from(&policy[1])),
        _ => Err(config_error(anyhow!(
            "--policy expects `constant <supply_water_K> <supply_air_K>` or `schedule <file>`"
        ))),
    }
}

fn format_ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn trajectory_csv(
    sim: &Simulator,
    trajectory: &[(Observation, RewardBreakdown)],
) -> String {
    let layout = sim.layout();
    let mut out = String::from("timestamp");
    for field in &layout.fields {
        out.push(',');
        out.push_str(field);
    }
    out.push_str(",carbon_cost,energy_cost,comfort_cost,reward\n");
    for (obs, reward) in trajectory {
        out.push_str(&format_ts(obs.timestamp));
        for value in obs.flatten(layout) {
            let _ = write!(out, ",{value}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            reward.carbon_cost, reward.energy_cost, reward.comfort_cost, reward.total
        );
    }
    out
}

pub fn run(
    manifest: &Path,
    steps: usize,
    seed: Option<u64>,
    ambient_path: &Path,
    policy: &[String],
    out: &Path,
) -> Result<(), CliError> {
    if steps == 0 {
        return Err(config_error(anyhow!("--steps must be at least 1")));
    }
    let config = load_config(manifest, seed)?;
    let ambient = load_ambient(ambient_path)?;
    let start = ambient[0].0;
    let actions = parse_policy(policy, start, steps)?;

    let mut sim = Simulator::assemble(&config).map_err(config_error)?;
    let zone_temperatures: BTreeMap<String, f64> = config
        .zones
        .iter()
        .map(|z| (z.clone(), config.initial.zone_temperature_k))
        .collect();
    let first_action = actions
        .first()
        .copied()
        .ok_or_else(|| runtime_error(anyhow!("policy schedule is empty")))?;
    let initial = Observation {
        timestamp: start,
        zone_temperatures,
        ambient_temperature: ambient[0].1,
        supply_air_temperature: config.initial.supply_air_temperature_k,
        supply_water_temperature: config.initial.supply_water_temperature_k,
        supply_air_setpoint: first_action.1.supply_air_setpoint,
        supply_water_setpoint: first_action.1.supply_water_setpoint,
        electricity_j: 0.0,
        natural_gas_j: 0.0,
        carbon_kg: 0.0,
    };
    sim.reset(&initial).map_err(runtime_error)?;
    let trajectory = sim
        .replay(&actions, &ambient, steps)
        .map_err(runtime_error)?;

    ensure_out_dir(out)?;
    write_file(&out.join("trajectory.csv"), &trajectory_csv(&sim, &trajectory))?;

    let last = &trajectory.last().expect("steps >= 1").0;
    let comfort_k_steps: f64 = trajectory
        .iter()
        .map(|(_, r)| r.comfort_cost * config.reward.comfort_scale_k)
        .sum();
    let mut summary = String::from("metric,value\n");
    let _ = writeln!(summary, "steps,{steps}");
    let _ = writeln!(summary, "electricity_kwh,{}", last.electricity_j / 3.6e6);
    let _ = writeln!(summary, "natural_gas_kwh,{}", last.natural_gas_j / 3.6e6);
    let _ = writeln!(summary, "carbon_kg,{}", last.carbon_kg);
    let _ = writeln!(summary, "comfort_violation_k_steps,{comfort_k_steps}");
    write_file(&out.join("summary.csv"), &summary)?;
    Ok(())
}

pub fn eval(manifest: &Path, telemetry_path: &Path, n: usize, out: &Path) -> Result<(), CliError> {
    let config = load_config(manifest, None)?;
    let telemetry = TelemetrySeries::load(telemetry_path).map_err(runtime_error)?;
    let (report, trace) =
        n_step_eval_traced(&config, &config.theta, &telemetry, n).map_err(runtime_error)?;

    ensure_out_dir(out)?;

    let mut report_csv = String::from("metric,value\n");
    let _ = writeln!(report_csv, "n,{}", report.n);
    let _ = writeln!(report_csv, "mae_k,{}", report.mae);
    let _ = writeln!(report_csv, "median_k,{}", report.median);
    for (zone, err) in &report.per_zone_errors {
        let _ = writeln!(report_csv, "zone_abs_error_k/{zone},{err}");
    }
    write_file(&out.join("report.csv"), &report_csv)?;

    let mut eps_csv = String::from("step,timestamp,epsilon_k\n");
    for (step, (ts, eps)) in report
        .timestamps
        .iter()
        .zip(&report.epsilon_series)
        .enumerate()
    {
        let _ = writeln!(eps_csv, "{step},{},{eps}", format_ts(*ts));
    }
    write_file(&out.join("epsilon_series.csv"), &eps_csv)?;

    let real_samples: Vec<Vec<f64>> = telemetry.records[..n]
        .iter()
        .map(|r| r.zone_temperatures.values().copied().collect())
        .collect();
    let sim_samples: Vec<Vec<f64>> = trace
        .sim_zone_temperatures
        .iter()
        .map(|m| m.values().copied().collect())
        .collect();
    let drift = DriftSeriesArtifact::new(&report.timestamps, &real_samples, &sim_samples);
    write_file(&out.join("drift.csv"), &drift.to_csv())?;

    let real_final = &telemetry.records[n - 1].zone_temperatures;
    for (floor_id, grid) in trace
        .simulator
        .floor_ids()
        .iter()
        .zip(trace.simulator.floors())
    {
        let heatmap = HeatmapArtifact::from_floor(floor_id, grid, real_final);
        write_file(&out.join(format!("heatmap_{floor_id}.csv")), &heatmap.to_csv())?;
        write_file(&out.join(format!("heatmap_{floor_id}.ppm")), &heatmap.to_ppm())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThetaPatch {
    theta: ThetaParams,
}

pub fn calibrate(
    manifest: &Path,
    telemetry_path: &Path,
    spec_path: &Path,
    jobs: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let config = load_config(manifest, None)?;
    let telemetry = TelemetrySeries::load(telemetry_path).map_err(runtime_error)?;
    let spec_text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))
        .map_err(runtime_error)?;
    let spec = CalibrationSpec::parse(&spec_text).map_err(runtime_error)?;

    let result = calibrate_with_jobs(&config, &spec, &telemetry, jobs).map_err(runtime_error)?;
    eprintln!(
        "calibrate: {} evaluations in {:.1}s (best MAE {} K at candidate {})",
        result.log.len(),
        result.wall_clock.as_secs_f64(),
        result.best_objective,
        result.best_index,
    );

    ensure_out_dir(out)?;

    let mut log_csv = String::from("index,");
    log_csv.push_str(&ThetaParams::NAMES.join(","));
    log_csv.push_str(",objective_mae_k\n");
    for eval in &result.log {
        let _ = write!(log_csv, "{}", eval.index);
        for value in eval.theta.to_array() {
            let _ = write!(log_csv, ",{value}");
        }
        let _ = writeln!(log_csv, ",{}", eval.objective);
    }
    write_file(&out.join("calibration_log.csv"), &log_csv)?;

    let patch = toml::to_string_pretty(&ThetaPatch {
        theta: result.best_theta,
    })
    .expect("theta serializes");
    write_file(&out.join("best_theta.toml"), &patch)?;

    // before/after comparison on the tuning window and any held-out windows
    let (tune_start, tune_len) = spec.objective_interval.unwrap_or((0, telemetry.len()));
    let mut comparison = String::from("interval,candidate,mae_k\n");
    let mut compare = |label: &str, start: usize, len: usize| -> Result<(), CliError> {
        let window = telemetry.window(start, len).map_err(runtime_error)?;
        for (candidate, theta) in [("before", &config.theta), ("after", &result.best_theta)] {
            let mae = match n_step_eval(&config, theta, &window, len) {
                Ok(r) => r.mae,
                Err(_) => f64::INFINITY,
            };
            let _ = writeln!(comparison, "{label},{candidate},{mae}");
        }
        Ok(())
    };
    compare("tuning", tune_start, tune_len)?;
    for (i, &(start, len)) in spec.validation_intervals.iter().enumerate() {
        compare(&format!("validation_{i}"), start, len)?;
    }
    write_file(&out.join("comparison.csv"), &comparison)?;

    if result.degenerate {
        return Err(CliError {
            code: DEGENERATE_CALIBRATION,
            message: anyhow!("all {} candidates failed to simulate", result.log.len()),
        });
    }
    Ok(())
}
