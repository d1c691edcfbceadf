//! Configuration ingestion: floorplan grids, device placements, and the
//! building manifest, validated into a `BuildingConfig` and assembled into
//! a runnable `Simulator`.
//!
//! Floorplan files carry a header line and a glyph grid:
//!
//! ```text
//! floor f1 dx_m 1.0 height_m 3.0
//! zone-alias A lobby
//! OOOOO
//! OXXXO
//! OXAXO
//! OXXXO
//! OOOOO
//! ```
//!
//! `O` is outside air, `X` an exterior wall, `x` an interior wall, and any
//! other ASCII letter or digit labels an interior-air zone. Zone labels must
//! be 4-connected. The devices file is line-based:
//!
//! ```text
//! device vav-1 type vav zone A diffuser 2,2 design_flow=0.5
//! device ahu-1 type ahu
//! device b-1 type boiler
//! device ch-1 type chiller
//! ```
//!
//! The manifest is a TOML file tying floorplans, devices, the physical
//! parameter vector, comfort bands, reward weights, and emission factors
//! together; see `Manifest` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Simulator;
use crate::grid::{CellKind, CellSpec, Material, AIR_MATERIAL};
use crate::hvac::{
    AhuConstants, BoilerConstants, ChillerConstants, EmissionFactors, VavConstants,
    ZoneComfortSpec,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: rows of unequal length (expected {expected}, got {got})")]
    RaggedGrid {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, column {col}: unknown glyph `{glyph}`")]
    UnknownGlyph { line: usize, col: usize, glyph: char },
    #[error("zone `{zone}` is split into disconnected regions")]
    DisconnectedZone { zone: String },
    #[error("floorplan has no interior air cells")]
    NoInterior,
    #[error("line {line}: unknown device type `{found}`")]
    UnknownDeviceType { line: usize, found: String },
    #[error("duplicate device id `{id}`")]
    DuplicateDeviceId { id: String },
    #[error("expected exactly one {kind}, found {count}")]
    MissingSingleton { kind: String, count: usize },
    #[error("device `{device}`: diffuser at ({row}, {col}) is outside zone `{zone}`")]
    DiffuserOutsideZone {
        device: String,
        zone: String,
        row: usize,
        col: usize,
    },
    #[error("device `{device}` references unknown zone `{zone}`")]
    UnknownZone { device: String, zone: String },
    #[error("zone `{zone}` has no VAV serving it")]
    ZoneWithoutVav { zone: String },
    #[error("parameter `{name}` = {value} outside declared bounds [{min}, {max}]")]
    ThetaOutOfBounds {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("manifest: {0}")]
    Manifest(#[from] toml::de::Error),
    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error("{path}: {cause}")]
    InFile {
        path: PathBuf,
        cause: Box<ConfigError>,
    },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// The eight tuned physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    /// h, W/(m²·K): wind and air currents against the exterior surfaces.
    pub exterior_convection_coefficient: f64,
    pub exterior_wall_conductivity: f64,
    pub exterior_wall_density: f64,
    pub exterior_wall_heat_capacity: f64,
    pub interior_wall_conductivity: f64,
    pub interior_wall_density: f64,
    pub interior_wall_heat_capacity: f64,
    /// Probability that an air volume takes part in the intra-zone shuffle.
    pub shuffle_probability: f64,
}

impl ThetaParams {
    pub const NAMES: [&'static str; 8] = [
        "exterior_convection_coefficient",
        "exterior_wall_conductivity",
        "exterior_wall_density",
        "exterior_wall_heat_capacity",
        "interior_wall_conductivity",
        "interior_wall_density",
        "interior_wall_heat_capacity",
        "shuffle_probability",
    ];

    /// The default search box: (name, min, max) per parameter.
    pub fn default_bounds() -> Vec<(String, f64, f64)> {
        [
            ("exterior_convection_coefficient", 5.0, 800.0),
            ("exterior_wall_conductivity", 0.01, 1.0),
            ("exterior_wall_density", 1.0, 3000.0),
            ("exterior_wall_heat_capacity", 100.0, 2500.0),
            ("interior_wall_conductivity", 5.0, 800.0),
            ("interior_wall_density", 0.5, 1500.0),
            ("interior_wall_heat_capacity", 500.0, 1500.0),
            ("shuffle_probability", 0.0, 1.0),
        ]
        .into_iter()
        .map(|(n, lo, hi)| (n.to_string(), lo, hi))
        .collect()
    }

    /// Midpoint of the default box.
    pub fn box_midpoint() -> Self {
        let mid: Vec<f64> = Self::default_bounds()
            .iter()
            .map(|(_, lo, hi)| (lo + hi) / 2.0)
            .collect();
        Self::from_array(mid.try_into().unwrap())
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.exterior_convection_coefficient,
            self.exterior_wall_conductivity,
            self.exterior_wall_density,
            self.exterior_wall_heat_capacity,
            self.interior_wall_conductivity,
            self.interior_wall_density,
            self.interior_wall_heat_capacity,
            self.shuffle_probability,
        ]
    }

    pub fn from_array(values: [f64; 8]) -> Self {
        ThetaParams {
            exterior_convection_coefficient: values[0],
            exterior_wall_conductivity: values[1],
            exterior_wall_density: values[2],
            exterior_wall_heat_capacity: values[3],
            interior_wall_conductivity: values[4],
            interior_wall_density: values[5],
            interior_wall_heat_capacity: values[6],
            shuffle_probability: values[7],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.to_array()[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let Some(i) = Self::NAMES.iter().position(|n| *n == name) else {
            return false;
        };
        let mut arr = self.to_array();
        arr[i] = value;
        *self = Self::from_array(arr);
        true
    }

    pub fn exterior_wall_material(&self) -> Material {
        Material {
            conductivity: self.exterior_wall_conductivity,
            density: self.exterior_wall_density,
            heat_capacity: self.exterior_wall_heat_capacity,
        }
    }

    pub fn interior_wall_material(&self) -> Material {
        Material {
            conductivity: self.interior_wall_conductivity,
            density: self.interior_wall_density,
            heat_capacity: self.interior_wall_heat_capacity,
        }
    }

    /// Check every component against the given box.
    pub fn check_bounds(&self, bounds: &[(String, f64, f64)]) -> Result<(), ConfigError> {
        for (name, lo, hi) in bounds {
            let Some(value) = self.get(name) else {
                return Err(ConfigError::Invalid(format!("unknown parameter `{name}`")));
            };
            if !(value.is_finite() && *lo <= value && value <= *hi) {
                return Err(ConfigError::ThetaOutOfBounds {
                    name: name.clone(),
                    value,
                    min: *lo,
                    max: *hi,
                });
            }
        }
        Ok(())
    }
}

impl Default for ThetaParams {
    fn default() -> Self {
        Self::box_midpoint()
    }
}

/// Reward weights and normalization scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub carbon_weight: f64,
    pub energy_weight: f64,
    pub comfort_weight: f64,
    /// Costs are divided by these reference scales so weights are unitless.
    pub carbon_scale_kg: f64,
    pub energy_scale_j: f64,
    pub comfort_scale_k: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            carbon_weight: 1.0,
            energy_weight: 1.0,
            comfort_weight: 10.0,
            carbon_scale_kg: 1.0,
            energy_scale_j: 3.6e6,
            comfort_scale_k: 1.0,
        }
    }
}

/// Initial conditions used when a run is not initialized from telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialConditions {
    pub zone_temperature_k: f64,
    pub supply_air_temperature_k: f64,
    pub supply_water_temperature_k: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        InitialConditions {
            zone_temperature_k: 294.15,
            supply_air_temperature_k: 287.15,
            supply_water_temperature_k: 318.15,
        }
    }
}

/// A parsed floorplan: header metadata plus the validated glyph grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorplanDoc {
    pub floor_id: String,
    pub dx: f64,
    pub floor_height: f64,
    pub rows: Vec<Vec<char>>,
    /// Glyph → long zone name, from `zone-alias` lines.
    pub aliases: BTreeMap<char, String>,
}

impl FloorplanDoc {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn glyph(&self, row: usize, col: usize) -> char {
        self.rows[row][col]
    }

    /// Canonical name for a zone glyph: the alias if declared, else the
    /// glyph itself.
    pub fn zone_name(&self, glyph: char) -> String {
        self.aliases
            .get(&glyph)
            .cloned()
            .unwrap_or_else(|| glyph.to_string())
    }

    /// Sorted canonical names of the zones on this floor.
    pub fn zone_names(&self) -> Vec<String> {
        let mut names: BTreeSet<String> = BTreeSet::new();
        for row in &self.rows {
            for &g in row {
                if is_zone_glyph(g) {
                    names.insert(self.zone_name(g));
                }
            }
        }
        names.into_iter().collect()
    }

    /// Write the document back in its file format.
    pub fn serialize(&self) -> String {
        let mut out = format!(
            "floor {} dx_m {} height_m {}\n",
            self.floor_id, self.dx, self.floor_height
        );
        for (glyph, name) in &self.aliases {
            out.push_str(&format!("zone-alias {glyph} {name}\n"));
        }
        for row in &self.rows {
            out.extend(row.iter());
            out.push('\n');
        }
        out
    }
}

fn is_zone_glyph(g: char) -> bool {
    g.is_ascii_alphanumeric() && g != 'O' && g != 'X' && g != 'x'
}

/// Parse and validate one floorplan document.
pub fn parse_floorplan(text: &str) -> Result<FloorplanDoc, ConfigError> {
    let mut floor_id = None;
    let mut dx = 1.0;
    let mut floor_height = 3.0;
    let mut aliases = BTreeMap::new();
    let mut rows: Vec<Vec<char>> = Vec::new();
    let mut grid_started = false;
    let mut width = 0usize;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if !grid_started {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = trimmed.split_whitespace().collect();
            match tokens[0] {
                "floor" => {
                    if tokens.len() != 6 || tokens[2] != "dx_m" || tokens[4] != "height_m" {
                        return Err(ConfigError::Malformed {
                            line: line_no,
                            message: "expected `floor <id> dx_m <v> height_m <v>`".into(),
                        });
                    }
                    floor_id = Some(tokens[1].to_string());
                    dx = parse_number(tokens[3], line_no)?;
                    floor_height = parse_number(tokens[5], line_no)?;
                    continue;
                }
                "zone-alias" => {
                    if tokens.len() != 3 || tokens[1].chars().count() != 1 {
                        return Err(ConfigError::Malformed {
                            line: line_no,
                            message: "expected `zone-alias <glyph> <long-name>`".into(),
                        });
                    }
                    let glyph = tokens[1].chars().next().unwrap();
                    if !is_zone_glyph(glyph) {
                        return Err(ConfigError::Malformed {
                            line: line_no,
                            message: format!("`{glyph}` is not a legal zone glyph"),
                        });
                    }
                    aliases.insert(glyph, tokens[2].to_string());
                    continue;
                }
                _ => {
                    grid_started = true;
                    width = line.chars().count();
                }
            }
        }
        if line.is_empty() {
            break; // blank line terminates the grid
        }
        let row: Vec<char> = line.chars().collect();
        if row.len() != width {
            return Err(ConfigError::RaggedGrid {
                line: line_no,
                expected: width,
                got: row.len(),
            });
        }
        for (col, &g) in row.iter().enumerate() {
            if g != 'O' && g != 'X' && g != 'x' && !is_zone_glyph(g) {
                return Err(ConfigError::UnknownGlyph {
                    line: line_no,
                    col: col + 1,
                    glyph: g,
                });
            }
        }
        rows.push(row);
    }

    let Some(floor_id) = floor_id else {
        return Err(ConfigError::Malformed {
            line: 1,
            message: "missing `floor <id> dx_m <v> height_m <v>` header".into(),
        });
    };
    if rows.is_empty() {
        return Err(ConfigError::NoInterior);
    }
    if !(dx.is_finite() && dx > 0.0) || !(floor_height.is_finite() && floor_height > 0.0) {
        return Err(ConfigError::Invalid(format!(
            "floor `{floor_id}`: dx and height must be positive"
        )));
    }

    let doc = FloorplanDoc {
        floor_id,
        dx,
        floor_height,
        rows,
        aliases,
    };
    if doc.zone_names().is_empty() {
        return Err(ConfigError::NoInterior);
    }
    check_floor_connectivity(&doc)?;
    Ok(doc)
}

/// Every zone label must form one 4-connected region.
fn check_floor_connectivity(doc: &FloorplanDoc) -> Result<(), ConfigError> {
    let rows = doc.n_rows();
    let cols = doc.n_cols();
    let mut visited = vec![false; rows * cols];
    let mut seen: BTreeSet<char> = BTreeSet::new();
    for r in 0..rows {
        for c in 0..cols {
            let g = doc.glyph(r, c);
            if !is_zone_glyph(g) || visited[r * cols + c] {
                continue;
            }
            if seen.contains(&g) {
                return Err(ConfigError::DisconnectedZone {
                    zone: doc.zone_name(g),
                });
            }
            seen.insert(g);
            let mut stack = vec![(r, c)];
            visited[r * cols + c] = true;
            while let Some((cr, cc)) = stack.pop() {
                for (nr, nc) in [
                    (cr.wrapping_sub(1), cc),
                    (cr + 1, cc),
                    (cr, cc.wrapping_sub(1)),
                    (cr, cc + 1),
                ] {
                    if nr < rows && nc < cols && !visited[nr * cols + nc] && doc.glyph(nr, nc) == g
                    {
                        visited[nr * cols + nc] = true;
                        stack.push((nr, nc));
                    }
                }
            }
        }
    }
    Ok(())
}

fn parse_number(token: &str, line: usize) -> Result<f64, ConfigError> {
    token.parse().map_err(|_| ConfigError::Malformed {
        line,
        message: format!("`{token}` is not a number"),
    })
}

/// One device from the devices file.
#[derive(Debug, Clone, PartialEq)]
pub enum DevicePlacement {
    Vav {
        constants: VavConstants,
        diffusers: Vec<(usize, usize)>,
    },
    Ahu(AhuConstants),
    Boiler(BoilerConstants),
    Chiller(ChillerConstants),
}

impl DevicePlacement {
    pub fn device_id(&self) -> &str {
        match self {
            DevicePlacement::Vav { constants, .. } => &constants.device_id,
            DevicePlacement::Ahu(c) => &c.device_id,
            DevicePlacement::Boiler(c) => &c.device_id,
            DevicePlacement::Chiller(c) => &c.device_id,
        }
    }

    /// Write the placement back in its file format.
    pub fn serialize(&self) -> String {
        match self {
            DevicePlacement::Vav {
                constants,
                diffusers,
            } => {
                let cells: Vec<String> = diffusers.iter().map(|(r, c)| format!("{r},{c}")).collect();
                format!(
                    "device {} type vav zone {} diffuser {} design_flow={} reheat_effectiveness={} min_damper={}",
                    constants.device_id,
                    constants.zone_id,
                    cells.join(";"),
                    constants.design_flow,
                    constants.reheat_effectiveness,
                    constants.min_damper,
                )
            }
            DevicePlacement::Ahu(c) => format!(
                "device {} type ahu recirc_fraction={} intake_fan_w={} exhaust_fan_w={} supply_air_min_k={} supply_air_max_k={} lag_s={}",
                c.device_id, c.recirc_fraction, c.intake_fan_power, c.exhaust_fan_power,
                c.supply_air_min, c.supply_air_max, c.lag_seconds,
            ),
            DevicePlacement::Boiler(c) => format!(
                "device {} type boiler efficiency={} pump_w={} supply_water_min_k={} supply_water_max_k={} lag_s={} loop_loss_fraction={}",
                c.device_id, c.efficiency, c.pump_power, c.supply_water_min, c.supply_water_max,
                c.lag_seconds, c.loop_loss_fraction,
            ),
            DevicePlacement::Chiller(c) => {
                format!("device {} type chiller cop={} pump_w={}", c.device_id, c.cop, c.pump_power)
            }
        }
    }
}

/// Parse the devices file: syntax, duplicate ids, and the
/// one-ahu/one-boiler/one-chiller cardinality.
pub fn parse_devices(text: &str) -> Result<Vec<DevicePlacement>, ConfigError> {
    let mut placements = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 4 || tokens[0] != "device" || tokens[2] != "type" {
            return Err(ConfigError::Malformed {
                line: line_no,
                message: "expected `device <id> type <t> ...`".into(),
            });
        }
        let id = tokens[1].to_string();
        if !ids.insert(id.clone()) {
            return Err(ConfigError::DuplicateDeviceId { id });
        }
        let device_type = tokens[3];
        let mut zone = None;
        let mut diffusers = Vec::new();
        let mut kv: BTreeMap<&str, f64> = BTreeMap::new();
        let mut rest = tokens[4..].iter().peekable();
        while let Some(token) = rest.next() {
            match *token {
                "zone" => {
                    let Some(z) = rest.next() else {
                        return Err(ConfigError::Malformed {
                            line: line_no,
                            message: "`zone` requires a label".into(),
                        });
                    };
                    zone = Some(z.to_string());
                }
                "diffuser" => {
                    let Some(list) = rest.next() else {
                        return Err(ConfigError::Malformed {
                            line: line_no,
                            message: "`diffuser` requires `r,c[;r,c...]`".into(),
                        });
                    };
                    for pair in list.split(';') {
                        let Some((r, c)) = pair.split_once(',') else {
                            return Err(ConfigError::Malformed {
                                line: line_no,
                                message: format!("bad diffuser coordinate `{pair}`"),
                            });
                        };
                        let parse = |s: &str| {
                            s.parse::<usize>().map_err(|_| ConfigError::Malformed {
                                line: line_no,
                                message: format!("bad diffuser coordinate `{pair}`"),
                            })
                        };
                        diffusers.push((parse(r)?, parse(c)?));
                    }
                }
                other => {
                    let Some((key, value)) = other.split_once('=') else {
                        return Err(ConfigError::Malformed {
                            line: line_no,
                            message: format!("unexpected token `{other}`"),
                        });
                    };
                    kv.insert(key, parse_number(value, line_no)?);
                }
            }
        }
        let get = |key: &str, default: f64| kv.get(key).copied().unwrap_or(default);
        let placement = match device_type {
            "vav" => {
                let Some(zone_id) = zone else {
                    return Err(ConfigError::Malformed {
                        line: line_no,
                        message: "vav requires `zone <label>`".into(),
                    });
                };
                if diffusers.is_empty() {
                    return Err(ConfigError::Malformed {
                        line: line_no,
                        message: "vav requires at least one diffuser cell".into(),
                    });
                }
                DevicePlacement::Vav {
                    constants: VavConstants {
                        device_id: id,
                        zone_id,
                        design_flow: get("design_flow", 0.5),
                        reheat_effectiveness: get("reheat_effectiveness", 0.8),
                        min_damper: get("min_damper", 0.2),
                        diffuser_count: diffusers.len(),
                    },
                    diffusers,
                }
            }
            "ahu" => DevicePlacement::Ahu(AhuConstants {
                device_id: id,
                recirc_fraction: get("recirc_fraction", 0.3),
                intake_fan_power: get("intake_fan_w", 1500.0),
                exhaust_fan_power: get("exhaust_fan_w", 1000.0),
                supply_air_min: get("supply_air_min_k", 285.15),
                supply_air_max: get("supply_air_max_k", 303.15),
                lag_seconds: get("lag_s", 900.0),
            }),
            "boiler" => DevicePlacement::Boiler(BoilerConstants {
                device_id: id,
                efficiency: get("efficiency", 0.85),
                pump_power: get("pump_w", 500.0),
                supply_water_min: get("supply_water_min_k", 303.15),
                supply_water_max: get("supply_water_max_k", 333.15),
                lag_seconds: get("lag_s", 900.0),
                loop_loss_fraction: get("loop_loss_fraction", 0.05),
            }),
            "chiller" => DevicePlacement::Chiller(ChillerConstants {
                device_id: id,
                cop: get("cop", 3.0),
                pump_power: get("pump_w", 400.0),
            }),
            other => {
                return Err(ConfigError::UnknownDeviceType {
                    line: line_no,
                    found: other.to_string(),
                })
            }
        };
        placements.push(placement);
    }

    for kind in ["ahu", "boiler", "chiller"] {
        let count = placements
            .iter()
            .filter(|p| match p {
                DevicePlacement::Ahu(_) => kind == "ahu",
                DevicePlacement::Boiler(_) => kind == "boiler",
                DevicePlacement::Chiller(_) => kind == "chiller",
                DevicePlacement::Vav { .. } => false,
            })
            .count();
        if count != 1 {
            return Err(ConfigError::MissingSingleton {
                kind: kind.to_string(),
                count,
            });
        }
    }
    Ok(placements)
}

/// Comfort section of the manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ComfortManifest {
    #[serde(default)]
    pub default: ComfortBand,
    #[serde(default)]
    pub zones: BTreeMap<String, ComfortBand>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ComfortBand {
    pub heating_setpoint_k: f64,
    pub cooling_setpoint_k: f64,
    pub deadband_k: f64,
}

impl Default for ComfortBand {
    fn default() -> Self {
        ComfortBand {
            heating_setpoint_k: 293.15,
            cooling_setpoint_k: 297.15,
            deadband_k: 0.5,
        }
    }
}

/// On-disk manifest schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub building: ManifestBuilding,
    #[serde(default)]
    pub theta: Option<ThetaParams>,
    #[serde(default)]
    pub comfort: ComfortManifest,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub emissions: EmissionFactors,
    #[serde(default)]
    pub simulation: SimulationManifest,
    #[serde(default)]
    pub initial: InitialConditions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestBuilding {
    pub floorplans: Vec<PathBuf>,
    pub devices: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationManifest {
    pub seed: u64,
}

/// Everything needed to assemble a simulator.
#[derive(Debug, Clone)]
pub struct BuildingConfig {
    pub floors: Vec<FloorplanDoc>,
    pub devices: Vec<DevicePlacement>,
    pub comfort: BTreeMap<String, ZoneComfortSpec>,
    pub theta: ThetaParams,
    pub reward: RewardConfig,
    pub emissions: EmissionFactors,
    pub seed: u64,
    pub initial: InitialConditions,
    /// Sorted canonical zone names across all floors.
    pub zones: Vec<String>,
}

impl BuildingConfig {
    /// Build and cross-validate a configuration from parsed parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        floors: Vec<FloorplanDoc>,
        devices: Vec<DevicePlacement>,
        comfort: &ComfortManifest,
        theta: ThetaParams,
        reward: RewardConfig,
        emissions: EmissionFactors,
        seed: u64,
        initial: InitialConditions,
    ) -> Result<Self, ConfigError> {
        if floors.is_empty() {
            return Err(ConfigError::Invalid("no floorplans declared".into()));
        }
        // Canonical zone names must be unique across floors: a glyph may be
        // reused on another floor only under a distinct alias.
        let mut zone_floor: BTreeMap<String, usize> = BTreeMap::new();
        for (fi, floor) in floors.iter().enumerate() {
            for name in floor.zone_names() {
                if zone_floor.insert(name.clone(), fi).is_some() {
                    return Err(ConfigError::Invalid(format!(
                        "zone `{name}` appears on more than one floor; alias one of them"
                    )));
                }
            }
        }
        let zones: Vec<String> = zone_floor.keys().cloned().collect();

        theta.check_bounds(&ThetaParams::default_bounds())?;

        let mut zones_with_vav = BTreeSet::new();
        for placement in &devices {
            if let DevicePlacement::Vav {
                constants,
                diffusers,
            } = placement
            {
                let Some(&floor_index) = zone_floor.get(&constants.zone_id) else {
                    return Err(ConfigError::UnknownZone {
                        device: constants.device_id.clone(),
                        zone: constants.zone_id.clone(),
                    });
                };
                let floor = &floors[floor_index];
                for &(row, col) in diffusers {
                    let in_zone = row < floor.n_rows()
                        && col < floor.n_cols()
                        && is_zone_glyph(floor.glyph(row, col))
                        && floor.zone_name(floor.glyph(row, col)) == constants.zone_id;
                    if !in_zone {
                        return Err(ConfigError::DiffuserOutsideZone {
                            device: constants.device_id.clone(),
                            zone: constants.zone_id.clone(),
                            row,
                            col,
                        });
                    }
                }
                zones_with_vav.insert(constants.zone_id.clone());
            }
        }
        for zone in &zones {
            if !zones_with_vav.contains(zone) {
                return Err(ConfigError::ZoneWithoutVav { zone: zone.clone() });
            }
        }

        let mut comfort_specs = BTreeMap::new();
        for zone in &zones {
            let band = comfort.zones.get(zone).copied().unwrap_or(comfort.default);
            let spec = ZoneComfortSpec {
                zone_id: zone.clone(),
                heating_setpoint: band.heating_setpoint_k,
                cooling_setpoint: band.cooling_setpoint_k,
                deadband: band.deadband_k,
            };
            spec.validate().map_err(ConfigError::Invalid)?;
            comfort_specs.insert(zone.clone(), spec);
        }

        Ok(BuildingConfig {
            floors,
            devices,
            comfort: comfort_specs,
            theta,
            reward,
            emissions,
            seed,
            initial,
            zones,
        })
    }

    /// Load a manifest file and everything it references; paths are
    /// resolved relative to the manifest's directory.
    pub fn load(manifest_path: &Path) -> Result<Self, ConfigError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|cause| ConfigError::Io {
                path: path.to_path_buf(),
                cause,
            })
        };
        let manifest: Manifest = toml::from_str(&read(manifest_path)?)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let in_file = |path: &Path| {
            let path = path.to_path_buf();
            move |cause: ConfigError| ConfigError::InFile {
                path,
                cause: Box::new(cause),
            }
        };

        let mut floors = Vec::new();
        for rel in &manifest.building.floorplans {
            let path = base.join(rel);
            floors.push(parse_floorplan(&read(&path)?).map_err(in_file(&path))?);
        }
        let devices_path = base.join(&manifest.building.devices);
        let devices = parse_devices(&read(&devices_path)?).map_err(in_file(&devices_path))?;

        Self::from_parts(
            floors,
            devices,
            &manifest.comfort,
            manifest.theta.unwrap_or_default(),
            manifest.reward,
            manifest.emissions,
            manifest.simulation.seed,
            manifest.initial,
        )
    }

    /// The same configuration with a different parameter vector (used by
    /// calibration candidates).
    pub fn with_theta(&self, theta: ThetaParams) -> Result<Self, ConfigError> {
        theta.check_bounds(&ThetaParams::default_bounds())?;
        let mut config = self.clone();
        config.theta = theta;
        Ok(config)
    }

    pub fn vav_placements(&self) -> impl Iterator<Item = (&VavConstants, &Vec<(usize, usize)>)> {
        self.devices.iter().filter_map(|p| match p {
            DevicePlacement::Vav {
                constants,
                diffusers,
            } => Some((constants, diffusers)),
            _ => None,
        })
    }

    pub fn ahu(&self) -> &AhuConstants {
        self.devices
            .iter()
            .find_map(|p| match p {
                DevicePlacement::Ahu(c) => Some(c),
                _ => None,
            })
            .expect("validated config has an ahu")
    }

    pub fn boiler(&self) -> &BoilerConstants {
        self.devices
            .iter()
            .find_map(|p| match p {
                DevicePlacement::Boiler(c) => Some(c),
                _ => None,
            })
            .expect("validated config has a boiler")
    }

    pub fn chiller(&self) -> &ChillerConstants {
        self.devices
            .iter()
            .find_map(|p| match p {
                DevicePlacement::Chiller(c) => Some(c),
                _ => None,
            })
            .expect("validated config has a chiller")
    }

    /// Which floor a canonical zone name lives on.
    pub fn zone_floor(&self, zone: &str) -> Option<usize> {
        self.floors
            .iter()
            .position(|f| f.zone_names().iter().any(|z| z == zone))
    }
}

/// Build cell specs for one floor under the given parameter vector.
pub(crate) fn floor_cells(
    floor: &FloorplanDoc,
    theta: &ThetaParams,
    initial_temperature: f64,
) -> (Vec<CellSpec>, Vec<String>) {
    let zone_names = floor.zone_names();
    let exterior = theta.exterior_wall_material();
    let interior = theta.interior_wall_material();
    let mut cells = Vec::with_capacity(floor.n_rows() * floor.n_cols());
    for row in &floor.rows {
        for &g in row {
            let spec = match g {
                'O' => CellSpec::outside(),
                'X' => CellSpec::wall(CellKind::ExteriorWall, exterior, initial_temperature),
                'x' => CellSpec::wall(CellKind::InteriorWall, interior, initial_temperature),
                _ => {
                    let name = floor.zone_name(g);
                    let zone = zone_names.iter().position(|z| *z == name).unwrap();
                    CellSpec {
                        kind: CellKind::InteriorAir { zone },
                        temperature: initial_temperature,
                        material: AIR_MATERIAL,
                        has_diffuser: false,
                    }
                }
            };
            cells.push(spec);
        }
    }
    (cells, zone_names)
}

/// Assemble a simulator from a validated configuration: one thermal grid
/// per floor, one plant, and the diffuser wiring between them.
pub fn assemble(config: &BuildingConfig) -> Result<Simulator, ConfigError> {
    Simulator::assemble(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_PLAN: &str = "\
floor f1 dx_m 1.0 height_m 3.0
OOOOO
OXXXO
OXAXO
OXXXO
OOOOO
";

    const TWO_ZONE_PLAN: &str = "\
floor f1 dx_m 1.0 height_m 3.0
OOOOOOO
OXXXXXO
OXAxBXO
OXAxBXO
OXXXXXO
OOOOOOO
";

    const DEVICES: &str = "\
# demo devices
device vav-1 type vav zone A diffuser 2,2
device ahu-1 type ahu
device b-1 type boiler
device ch-1 type chiller
";

    #[test]
    fn minimal_floorplan_parses_field_by_field() {
        let doc = parse_floorplan(MINIMAL_PLAN).unwrap();
        assert_eq!(doc.floor_id, "f1");
        assert_eq!(doc.dx, 1.0);
        assert_eq!(doc.floor_height, 3.0);
        assert_eq!(doc.n_rows(), 5);
        assert_eq!(doc.n_cols(), 5);
        assert_eq!(doc.glyph(0, 0), 'O');
        assert_eq!(doc.glyph(1, 1), 'X');
        assert_eq!(doc.glyph(2, 2), 'A');
        assert_eq!(doc.zone_names(), vec!["A".to_string()]);
    }

    #[test]
    fn ragged_grid_is_rejected() {
        let text = "floor f1 dx_m 1.0 height_m 3.0\nOOOOO\nOOOO\n";
        let err = parse_floorplan(text).unwrap_err();
        assert!(matches!(err, ConfigError::RaggedGrid { line: 3, .. }));
    }

    #[test]
    fn unknown_glyph_reports_position() {
        let text = "floor f1 dx_m 1.0 height_m 3.0\nOOO\nO?O\nOOO\n";
        let err = parse_floorplan(text).unwrap_err();
        match err {
            ConfigError::UnknownGlyph { line, col, glyph } => {
                assert_eq!((line, col, glyph), (3, 2, '?'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disconnected_zone_is_rejected() {
        let text = "floor f1 dx_m 1.0 height_m 3.0\nOOOOO\nOAxAO\nOOOOO\n";
        let err = parse_floorplan(text).unwrap_err();
        assert!(matches!(err, ConfigError::DisconnectedZone { zone } if zone == "A"));
    }

    #[test]
    fn plan_without_interior_is_rejected() {
        let text = "floor f1 dx_m 1.0 height_m 3.0\nOOO\nOXO\nOOO\n";
        assert!(matches!(
            parse_floorplan(text).unwrap_err(),
            ConfigError::NoInterior
        ));
    }

    #[test]
    fn zone_alias_resolves_names() {
        let text = "floor f1 dx_m 1.0 height_m 3.0\nzone-alias A lobby\nOOOOO\nOXXXO\nOXAXO\nOXXXO\nOOOOO\n";
        let doc = parse_floorplan(text).unwrap();
        assert_eq!(doc.zone_names(), vec!["lobby".to_string()]);
    }

    #[test]
    fn floorplan_roundtrips_through_serialize() {
        let doc = parse_floorplan(TWO_ZONE_PLAN).unwrap();
        let again = parse_floorplan(&doc.serialize()).unwrap();
        assert_eq!(doc, again);
    }

    #[test]
    fn devices_parse_with_defaults() {
        let devices = parse_devices(DEVICES).unwrap();
        assert_eq!(devices.len(), 4);
        let DevicePlacement::Vav {
            constants,
            diffusers,
        } = &devices[0]
        else {
            panic!("first device should be the vav");
        };
        assert_eq!(constants.device_id, "vav-1");
        assert_eq!(constants.zone_id, "A");
        assert_eq!(constants.design_flow, 0.5);
        assert_eq!(constants.min_damper, 0.2);
        assert_eq!(diffusers, &vec![(2, 2)]);
    }

    #[test]
    fn devices_roundtrip_through_serialize() {
        let devices = parse_devices(DEVICES).unwrap();
        let text: String = devices
            .iter()
            .map(|d| d.serialize() + "\n")
            .collect();
        let again = parse_devices(&text).unwrap();
        assert_eq!(devices, again);
    }

    #[test]
    fn unknown_device_type_is_rejected() {
        let err = parse_devices("device d1 type fancoil\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownDeviceType { line: 1, .. }));
    }

    #[test]
    fn duplicate_device_id_is_rejected() {
        let text = "device a type ahu\ndevice a type boiler\n";
        assert!(matches!(
            parse_devices(text).unwrap_err(),
            ConfigError::DuplicateDeviceId { .. }
        ));
    }

    #[test]
    fn duplicate_boiler_is_a_cardinality_error() {
        let text = "\
device vav-1 type vav zone A diffuser 2,2
device ahu-1 type ahu
device b-1 type boiler
device b-2 type boiler
device ch-1 type chiller
";
        let err = parse_devices(text).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::MissingSingleton { kind, count: 2 } if kind == "boiler"
        ));
    }

    fn config_from(plan: &str, devices: &str) -> Result<BuildingConfig, ConfigError> {
        BuildingConfig::from_parts(
            vec![parse_floorplan(plan).unwrap()],
            parse_devices(devices).unwrap(),
            &ComfortManifest::default(),
            ThetaParams::default(),
            RewardConfig::default(),
            EmissionFactors::default(),
            0,
            InitialConditions::default(),
        )
    }

    #[test]
    fn diffuser_on_wall_is_rejected() {
        let devices = "\
device vav-1 type vav zone A diffuser 1,1
device ahu-1 type ahu
device b-1 type boiler
device ch-1 type chiller
";
        let err = config_from(MINIMAL_PLAN, devices).unwrap_err();
        assert!(matches!(err, ConfigError::DiffuserOutsideZone { row: 1, col: 1, .. }));
    }

    #[test]
    fn vav_zone_must_exist() {
        let devices = "\
device vav-1 type vav zone Q diffuser 2,2
device ahu-1 type ahu
device b-1 type boiler
device ch-1 type chiller
";
        let err = config_from(MINIMAL_PLAN, devices).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownZone { .. }));
    }

    #[test]
    fn every_zone_needs_a_vav() {
        let err = config_from(TWO_ZONE_PLAN, DEVICES).unwrap_err();
        assert!(matches!(err, ConfigError::ZoneWithoutVav { zone } if zone == "B"));
    }

    #[test]
    fn theta_outside_bounds_is_rejected_at_load() {
        let theta = ThetaParams {
            exterior_wall_conductivity: 5.0, // box is [0.01, 1]
            ..ThetaParams::default()
        };
        let result = BuildingConfig::from_parts(
            vec![parse_floorplan(MINIMAL_PLAN).unwrap()],
            parse_devices(DEVICES).unwrap(),
            &ComfortManifest::default(),
            theta,
            RewardConfig::default(),
            EmissionFactors::default(),
            0,
            InitialConditions::default(),
        );
        assert!(matches!(
            result.unwrap_err(),
            ConfigError::ThetaOutOfBounds { name, .. } if name == "exterior_wall_conductivity"
        ));
    }

    #[test]
    fn midpoint_theta_assembles_cleanly() {
        let config = config_from(MINIMAL_PLAN, DEVICES).unwrap();
        let sim = assemble(&config).unwrap();
        let grid = &sim.floors()[0];
        let diffuser = grid.cell(2, 2);
        assert!(diffuser.has_diffuser);
        assert!(diffuser.kind.is_air());
    }

    #[test]
    fn reused_glyph_across_floors_requires_alias() {
        let f1 = parse_floorplan(MINIMAL_PLAN).unwrap();
        let mut second = MINIMAL_PLAN.replace("floor f1", "floor f2");
        let f2_same = parse_floorplan(&second).unwrap();
        let result = BuildingConfig::from_parts(
            vec![f1.clone(), f2_same],
            parse_devices(DEVICES).unwrap(),
            &ComfortManifest::default(),
            ThetaParams::default(),
            RewardConfig::default(),
            EmissionFactors::default(),
            0,
            InitialConditions::default(),
        );
        assert!(result.is_err());

        second = second.replace("floor f2 dx_m 1.0 height_m 3.0", "floor f2 dx_m 1.0 height_m 3.0\nzone-alias A upper");
        let f2_aliased = parse_floorplan(&second).unwrap();
        let devices = "\
device vav-1 type vav zone A diffuser 2,2
device vav-2 type vav zone upper diffuser 2,2
device ahu-1 type ahu
device b-1 type boiler
device ch-1 type chiller
";
        let config = BuildingConfig::from_parts(
            vec![f1, f2_aliased],
            parse_devices(devices).unwrap(),
            &ComfortManifest::default(),
            ThetaParams::default(),
            RewardConfig::default(),
            EmissionFactors::default(),
            0,
            InitialConditions::default(),
        )
        .unwrap();
        assert_eq!(config.zones, vec!["A".to_string(), "upper".to_string()]);
    }
}
