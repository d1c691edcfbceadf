//! Telemetry ingestion, N-step fidelity metrics, and bounded black-box
//! parameter search.
//!
//! Fidelity is scored by N-step prediction: initialize the simulator from
//! the first telemetry record, replay the recorded setpoints and ambient
//! conditions, and take the spatial mean absolute error of the zone
//! temperatures at the final step. Calibration minimizes that error over
//! the parameter box with a seeded quasirandom sweep (coordinate descent
//! and a boxed simplex are also available).

mod metrics;
mod search;
mod synthetic;
mod telemetry;

pub use metrics::{
    n_step_eval, n_step_eval_traced, per_zone_abs_errors, spatial_error, EvalTrace,
    FidelityReport,
};
pub use search::{
    calibrate, calibrate_with_jobs, CalibrationResult, CalibrationSpec, Evaluation,
    SearchStrategy,
};
pub use synthetic::{constant_ambient, generate_telemetry, Policy};
pub use telemetry::{TelemetryError, TelemetryRecord, TelemetrySeries};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("zone sets differ between real and simulated readings: `{zone}`")]
    ZoneSetMismatch { zone: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error(transparent)]
    Config(#[from] crate::building::ConfigError),
}
