//! Lightweight calibratable building-thermal simulator.
//!
//! The building is discretized into per-floor grids of control volumes
//! (`grid`), conditioned by an energy-balance HVAC plant (`hvac`), assembled
//! from plain-text floorplan and device files (`building`), and stepped in
//! five-minute intervals through a fixed observation/action interface
//! (`engine`). Fidelity against recorded telemetry is scored by N-step
//! replay, and the physical parameter vector is tuned by bounded black-box
//! search (`calib`). `artifacts` renders drift series and difference
//! heatmaps from evaluation runs.

pub mod artifacts;
pub mod building;
pub mod calib;
pub mod engine;
pub mod grid;
pub mod hvac;
pub mod stats;

pub use building::BuildingConfig;
pub use engine::Simulator;
pub use engine::{Action, Observation, RewardBreakdown};
pub use grid::{CellKind, ControlVolume, Material, StepDiagnostics, ThermalGrid};
