//! N-step prediction fidelity metrics.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};

use super::{CalibError, TelemetrySeries};
use crate::building::{BuildingConfig, ThetaParams};
use crate::engine::{Action, Observation, Simulator};
use crate::stats;

/// Fidelity of one N-step replay.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub n: usize,
    /// Spatial MAE at step N−1, K.
    pub mae: f64,
    /// Median absolute zone error at step N−1, K.
    pub median: f64,
    /// |real − sim| per zone at step N−1, K.
    pub per_zone_errors: BTreeMap<String, f64>,
    /// ε_t for t = 0..N−1 (drift series).
    pub epsilon_series: Vec<f64>,
    pub timestamps: Vec<DateTime<Utc>>,
}

/// |real − sim| per zone; the zone sets must match.
pub fn per_zone_abs_errors(
    real: &BTreeMap<String, f64>,
    sim: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, CalibError> {
    for zone in real.keys() {
        if !sim.contains_key(zone) {
            return Err(CalibError::ZoneSetMismatch { zone: zone.clone() });
        }
    }
    for zone in sim.keys() {
        if !real.contains_key(zone) {
            return Err(CalibError::ZoneSetMismatch { zone: zone.clone() });
        }
    }
    Ok(real
        .iter()
        .map(|(zone, &t_real)| (zone.clone(), (t_real - sim[zone]).abs()))
        .collect())
}

/// Spatial mean absolute error over zones at one timestep, plus the median
/// of the absolute errors (even counts take the mean of the two middle
/// values).
pub fn spatial_error(
    real: &BTreeMap<String, f64>,
    sim: &BTreeMap<String, f64>,
) -> Result<(f64, f64), CalibError> {
    let errors = per_zone_abs_errors(real, sim)?;
    let values: Vec<f64> = errors.values().copied().collect();
    let mae = values.iter().sum::<f64>() / values.len() as f64;
    Ok((mae, stats::median(&values)))
}

/// Build the observation that initializes a replay from a telemetry record.
pub fn initial_observation(record: &super::TelemetryRecord) -> Observation {
    Observation::initial(
        record.timestamp,
        record.zone_temperatures.clone(),
        record.ambient_temperature,
        record.supply_water_setpoint,
        record.supply_air_setpoint,
    )
}

/// Everything an evaluation saw, for rendering drift series and heatmaps.
#[derive(Debug, Clone)]
pub struct EvalTrace {
    /// Simulated zone means at t = 0..N−1.
    pub sim_zone_temperatures: Vec<BTreeMap<String, f64>>,
    /// The simulator in its step-(N−1) state.
    pub simulator: Simulator,
}

/// N-step evaluation: reset from the first record of `telemetry`, replay
/// the recorded setpoints and ambient for N−1 steps, and score the spatial
/// error at step N−1. The sample at time t drives the step from t to t+1.
pub fn n_step_eval(
    config: &BuildingConfig,
    theta: &ThetaParams,
    telemetry: &TelemetrySeries,
    n: usize,
) -> Result<FidelityReport, CalibError> {
    n_step_eval_traced(config, theta, telemetry, n).map(|(report, _)| report)
}

/// As `n_step_eval`, also returning the simulated trajectory and final
/// state.
pub fn n_step_eval_traced(
    config: &BuildingConfig,
    theta: &ThetaParams,
    telemetry: &TelemetrySeries,
    n: usize,
) -> Result<(FidelityReport, EvalTrace), CalibError> {
    if n == 0 || telemetry.len() < n {
        return Err(CalibError::Invalid(format!(
            "N = {n} exceeds the {}-record telemetry window",
            telemetry.len()
        )));
    }
    let candidate = config.with_theta(*theta)?;
    let mut sim = Simulator::assemble(&candidate)?;

    let first = &telemetry.records[0];
    let obs0 = sim.reset(&initial_observation(first))?;

    let mut epsilon_series = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    let (eps0, _) = spatial_error(&first.zone_temperatures, &obs0.zone_temperatures)?;
    epsilon_series.push(eps0);
    timestamps.push(first.timestamp);

    let actions: Vec<(DateTime<Utc>, Action)> = telemetry.records[..n]
        .iter()
        .map(|r| {
            (
                r.timestamp,
                Action {
                    supply_water_setpoint: r.supply_water_setpoint,
                    supply_air_setpoint: r.supply_air_setpoint,
                },
            )
        })
        .collect();
    let ambient: Vec<(DateTime<Utc>, f64)> = telemetry.records[..n]
        .iter()
        .map(|r| (r.timestamp, r.ambient_temperature))
        .collect();
    let trajectory = sim.replay(&actions, &ambient, n - 1)?;

    let mut per_zone_errors = per_zone_abs_errors(
        &first.zone_temperatures,
        &obs0.zone_temperatures,
    )?;
    let mut mae = eps0;
    let mut median = stats::median(&per_zone_errors.values().copied().collect::<Vec<_>>());
    let mut sim_zone_temperatures = vec![obs0.zone_temperatures.clone()];
    for (t, (obs, _)) in trajectory.iter().enumerate() {
        let record = &telemetry.records[t + 1];
        let errors = per_zone_abs_errors(&record.zone_temperatures, &obs.zone_temperatures)?;
        let values: Vec<f64> = errors.values().copied().collect();
        let eps = values.iter().sum::<f64>() / values.len() as f64;
        epsilon_series.push(eps);
        timestamps.push(record.timestamp);
        sim_zone_temperatures.push(obs.zone_temperatures.clone());
        if t + 1 == n - 1 {
            mae = eps;
            median = stats::median(&values);
            per_zone_errors = errors;
        }
    }

    Ok((
        FidelityReport {
            n,
            mae,
            median,
            per_zone_errors,
            epsilon_series,
            timestamps,
        },
        EvalTrace {
            sim_zone_temperatures,
            simulator: sim,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(z, v)| (z.to_string(), *v)).collect()
    }

    #[test]
    fn perfect_fidelity_scores_zero() {
        let real = map(&[("A", 294.0), ("B", 296.0)]);
        let (mae, median) = spatial_error(&real, &real.clone()).unwrap();
        assert_eq!(mae, 0.0);
        assert_eq!(median, 0.0);
    }

    #[test]
    fn four_zone_hand_case() {
        let real = map(&[("A", 295.0), ("B", 295.0), ("C", 295.0), ("D", 295.0)]);
        let sim = map(&[("A", 294.0), ("B", 295.0), ("C", 295.0), ("D", 295.0)]);
        let (mae, median) = spatial_error(&real, &sim).unwrap();
        assert_relative_eq!(mae, 0.25);
        assert_eq!(median, 0.0);
    }

    #[test]
    fn three_zone_hand_case() {
        let real = map(&[("A", 295.2), ("B", 295.4), ("C", 295.9)]);
        let sim = map(&[("A", 295.0), ("B", 295.0), ("C", 295.0)]);
        let (mae, median) = spatial_error(&real, &sim).unwrap();
        assert_relative_eq!(mae, 0.5, epsilon = 1e-12);
        assert_relative_eq!(median, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn zone_set_mismatch_is_rejected() {
        let real = map(&[("A", 295.0), ("B", 295.0)]);
        let sim = map(&[("A", 295.0)]);
        assert!(matches!(
            spatial_error(&real, &sim).unwrap_err(),
            CalibError::ZoneSetMismatch { zone } if zone == "B"
        ));
        let sim = map(&[("A", 295.0), ("C", 295.0)]);
        assert!(spatial_error(&real, &sim).is_err());
    }

    #[test]
    fn mae_and_median_match_brute_force_on_random_pairs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let z = rng.random_range(1..=20usize);
            let mut real = BTreeMap::new();
            let mut sim = BTreeMap::new();
            for i in 0..z {
                let name = format!("z{i:02}");
                real.insert(name.clone(), 280.0 + 30.0 * rng.random::<f64>());
                sim.insert(name, 280.0 + 30.0 * rng.random::<f64>());
            }
            let (mae, median) = spatial_error(&real, &sim).unwrap();

            // brute force: collect |e|, naive mean, sort-based median
            let mut errors: Vec<f64> = real
                .iter()
                .map(|(zone, t)| (t - sim[zone]).abs())
                .collect();
            let brute_mae = errors.iter().sum::<f64>() / z as f64;
            errors.sort_by(f64::total_cmp);
            let brute_median = if z % 2 == 1 {
                errors[z / 2]
            } else {
                (errors[z / 2 - 1] + errors[z / 2]) / 2.0
            };
            assert_eq!(format!("{mae:.12}"), format!("{brute_mae:.12}"));
            assert_eq!(format!("{median:.12}"), format!("{brute_median:.12}"));
        }
    }
}
