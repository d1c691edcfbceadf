//! Regenerate the demo telemetry and ambient series under `fixtures/demo`.
//!
//! The telemetry comes from the simulator itself, run at a parameter vector
//! deliberately offset from the manifest's, so `sbsim eval` shows real
//! drift and `sbsim calibrate` has something to recover. Two back-to-back
//! 72-record intervals are written: the first for tuning, the second for
//! validation.
//!
//! Usage: cargo run -p sbsim-cli --example gen_demo [DEMO_DIR]

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use sbsim::building::BuildingConfig;
use sbsim::calib::{generate_telemetry, Policy, TelemetrySeries};
use sbsim::engine::{Action, STEP_SECONDS};

fn night_ambient(start: DateTime<Utc>, n: usize, from_k: f64, drop_k: f64) -> Vec<(DateTime<Utc>, f64)> {
    (0..n)
        .map(|k| {
            (
                start + chrono::Duration::seconds(STEP_SECONDS * k as i64),
                from_k - drop_k * k as f64 / (n - 1) as f64,
            )
        })
        .collect()
}

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/demo".to_string()),
    );
    let config = BuildingConfig::load(&dir.join("manifest.toml")).expect("demo manifest");

    // ground truth for the demo: offset from the manifest so calibration
    // has a gap to close
    let mut truth = config.theta;
    truth.exterior_convection_coefficient = 620.0;
    truth.exterior_wall_conductivity = 0.18;
    truth.exterior_wall_density = 2200.0;
    truth.interior_wall_conductivity = 610.0;
    truth.shuffle_probability = 0.85;

    let policy = Policy::Constant(Action {
        supply_water_setpoint: 318.15,
        supply_air_setpoint: 287.15,
    });

    let start_a = Utc.with_ymd_and_hms(2023, 7, 6, 1, 40, 0).unwrap();
    let zones_a = BTreeMap::from([
        ("lobby".to_string(), 294.65),
        ("office-east".to_string(), 295.65),
        ("office-west".to_string(), 296.15),
    ]);
    let ambient_a = night_ambient(start_a, 72, 286.15, 4.0);

    let start_b = start_a + chrono::Duration::seconds(STEP_SECONDS * 72);
    let zones_b: BTreeMap<String, f64> = {
        // interval (b) starts wherever interval (a) ended
        let series_a = generate_telemetry(&config, &truth, start_a, &zones_a, &policy, &ambient_a, 72)
            .expect("interval a");
        series_a.records.last().unwrap().zone_temperatures.clone()
    };
    let ambient_b = night_ambient(start_b, 72, 282.15, 1.5);

    let series_a = generate_telemetry(&config, &truth, start_a, &zones_a, &policy, &ambient_a, 72)
        .expect("interval a");
    let series_b = generate_telemetry(&config, &truth, start_b, &zones_b, &policy, &ambient_b, 72)
        .expect("interval b");

    let combined = TelemetrySeries {
        records: series_a
            .records
            .into_iter()
            .chain(series_b.records)
            .collect(),
        zones: series_a.zones,
    };
    combined.write(&dir.join("telemetry.csv")).expect("write telemetry");

    let mut ambient_csv = String::from("timestamp,ambient_temperature_k\n");
    for (ts, value) in ambient_a.iter().chain(&ambient_b) {
        ambient_csv.push_str(&format!(
            "{},{}\n",
            ts.to_rfc3339_opts(SecondsFormat::Secs, true),
            value
        ));
    }
    std::fs::write(dir.join("ambient.csv"), ambient_csv).expect("write ambient");

    println!(
        "wrote {} telemetry records and the ambient series to {}",
        combined.records.len(),
        dir.display()
    );
}
