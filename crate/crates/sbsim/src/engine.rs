//! Simulation loop and control interface.
//!
//! One step covers a five-minute interval: read zone means and update the
//! thermostats, run the plant to get per-diffuser power and meter deltas,
//! advance every floor grid with substepping, shuffle intra-zone air, then
//! emit an observation and reward. The observation flattens to a
//! fixed-length vector whose ordering manifest is derived from the
//! configuration, and `replay` drives the loop from recorded setpoint and
//! ambient series with no agent involved.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::building::{BuildingConfig, ConfigError, RewardConfig};
use crate::grid::{CellKind, StepDiagnostics, ThermalGrid};
use crate::hvac::{thermostat_demand, Demand, HvacPlant, HvacError, PlantAction, ZoneComfortSpec};

/// External step contract: every step advances five minutes, and telemetry
/// is aligned to the same lattice.
pub const STEP_SECONDS: i64 = 300;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("initial observation is missing a reading for zone `{zone}`")]
    MissingZoneReading { zone: String },
    #[error("series is missing the sample at {expected}")]
    SeriesGap { expected: DateTime<Utc> },
    #[error("timestamp {timestamp} is not on the five-minute lattice")]
    MisalignedTimestamp { timestamp: DateTime<Utc> },
    #[error(transparent)]
    Hvac(#[from] HvacError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Agent action: the two tuned setpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    /// T̂_b, K.
    pub supply_water_setpoint: f64,
    /// T̂_s, K.
    pub supply_air_setpoint: f64,
}

/// One observation of the building state.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub timestamp: DateTime<Utc>,
    pub zone_temperatures: BTreeMap<String, f64>,
    pub ambient_temperature: f64,
    pub supply_air_temperature: f64,
    pub supply_water_temperature: f64,
    pub supply_air_setpoint: f64,
    pub supply_water_setpoint: f64,
    pub electricity_j: f64,
    pub natural_gas_j: f64,
    pub carbon_kg: f64,
}

impl Observation {
    /// Observation for initializing a simulator when only zone readings,
    /// ambient, and the applied setpoints are known (the telemetry case):
    /// supply temperatures start at their setpoints and meters at zero.
    pub fn initial(
        timestamp: DateTime<Utc>,
        zone_temperatures: BTreeMap<String, f64>,
        ambient_temperature: f64,
        supply_water_setpoint: f64,
        supply_air_setpoint: f64,
    ) -> Self {
        Observation {
            timestamp,
            zone_temperatures,
            ambient_temperature,
            supply_air_temperature: supply_air_setpoint,
            supply_water_temperature: supply_water_setpoint,
            supply_air_setpoint,
            supply_water_setpoint,
            electricity_j: 0.0,
            natural_gas_j: 0.0,
            carbon_kg: 0.0,
        }
    }

    /// Flatten to the fixed-length vector described by `layout`.
    pub fn flatten(&self, layout: &ObservationLayout) -> Vec<f64> {
        layout
            .fields
            .iter()
            .map(|field| self.field(field).expect("layout field missing"))
            .collect()
    }

    pub fn field(&self, name: &str) -> Option<f64> {
        if let Some(zone) = name.strip_prefix("zone_air_temperature_k/") {
            return self.zone_temperatures.get(zone).copied();
        }
        match name {
            "ambient_temperature_k" => Some(self.ambient_temperature),
            "supply_air_temperature_k" => Some(self.supply_air_temperature),
            "supply_water_temperature_k" => Some(self.supply_water_temperature),
            "supply_air_setpoint_k" => Some(self.supply_air_setpoint),
            "supply_water_setpoint_k" => Some(self.supply_water_setpoint),
            "electricity_j" => Some(self.electricity_j),
            "natural_gas_j" => Some(self.natural_gas_j),
            "carbon_kg" => Some(self.carbon_kg),
            _ => None,
        }
    }
}

/// Stable ordering manifest for the flattened observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationLayout {
    pub fields: Vec<String>,
}

impl ObservationLayout {
    pub fn for_zones(zones: &[String]) -> Self {
        let mut fields = vec![
            "ambient_temperature_k".to_string(),
            "supply_air_temperature_k".to_string(),
            "supply_water_temperature_k".to_string(),
            "supply_air_setpoint_k".to_string(),
            "supply_water_setpoint_k".to_string(),
        ];
        for zone in zones {
            fields.push(format!("zone_air_temperature_k/{zone}"));
        }
        fields.extend([
            "electricity_j".to_string(),
            "natural_gas_j".to_string(),
            "carbon_kg".to_string(),
        ]);
        ObservationLayout { fields }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Per-step reward decomposition. Costs are non-negative and normalized by
/// the configured reference scales; the total is their negated weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub carbon_cost: f64,
    pub energy_cost: f64,
    pub comfort_cost: f64,
    pub weights: (f64, f64, f64),
    pub total: f64,
}

/// A fully assembled building simulator: per-floor grids, one plant, and
/// the wiring between them.
#[derive(Debug, Clone)]
pub struct Simulator {
    floors: Vec<ThermalGrid>,
    floor_ids: Vec<String>,
    /// zone name → (floor index, zone index within that floor's grid).
    zone_locations: BTreeMap<String, (usize, usize)>,
    plant: HvacPlant,
    /// Per plant VAV (same order): the (floor, cell) diffuser targets.
    vav_diffusers: Vec<Vec<(usize, usize)>>,
    comfort: BTreeMap<String, ZoneComfortSpec>,
    thermostats: BTreeMap<String, Demand>,
    reward: RewardConfig,
    layout: ObservationLayout,
    rng: ChaCha8Rng,
    seed: u64,
    time: DateTime<Utc>,
    last_ambient: f64,
    last_diagnostics: Vec<StepDiagnostics>,
}

impl Simulator {
    /// Assemble from a validated configuration: one grid per floor (floors
    /// are thermally isolated), cell materials from the parameter vector,
    /// diffuser flags from the VAV placements.
    pub fn assemble(config: &BuildingConfig) -> Result<Self, ConfigError> {
        let initial_t = config.initial.zone_temperature_k;
        let mut floors = Vec::new();
        let mut floor_ids = Vec::new();
        let mut zone_locations = BTreeMap::new();
        for (fi, doc) in config.floors.iter().enumerate() {
            let (cells, zone_names) = crate::building::floor_cells(doc, &config.theta, initial_t);
            let grid = ThermalGrid::new(
                doc.n_rows(),
                doc.n_cols(),
                doc.dx,
                doc.floor_height,
                cells,
                config.theta.exterior_convection_coefficient,
                config.theta.shuffle_probability,
                zone_names.clone(),
            )?;
            for (zi, name) in zone_names.iter().enumerate() {
                zone_locations.insert(name.clone(), (fi, zi));
            }
            floors.push(grid);
            floor_ids.push(doc.floor_id.clone());
        }

        // Deterministic plant order: VAVs sorted by device id.
        let mut vav_placements: Vec<_> = config.vav_placements().collect();
        vav_placements.sort_by(|a, b| a.0.device_id.cmp(&b.0.device_id));
        let mut vav_constants = Vec::new();
        let mut vav_diffusers = Vec::new();
        for (constants, diffusers) in vav_placements {
            let (floor_index, _) = zone_locations[&constants.zone_id];
            let grid = &mut floors[floor_index];
            let mut cells = Vec::new();
            for &(row, col) in diffusers {
                let idx = grid.index(row, col);
                grid.set_diffuser(idx)?;
                cells.push((floor_index, idx));
            }
            vav_constants.push(constants.clone());
            vav_diffusers.push(cells);
        }

        let plant = HvacPlant::new(
            config.ahu().clone(),
            config.boiler().clone(),
            config.chiller().clone(),
            vav_constants,
            config.emissions,
        );
        let thermostats = config
            .zones
            .iter()
            .map(|z| (z.clone(), Demand::None))
            .collect();
        Ok(Simulator {
            floors,
            floor_ids,
            zone_locations,
            plant,
            vav_diffusers,
            comfort: config.comfort.clone(),
            thermostats,
            reward: config.reward,
            layout: ObservationLayout::for_zones(&config.zones),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            seed: config.seed,
            time: DateTime::<Utc>::UNIX_EPOCH,
            last_ambient: initial_t,
            last_diagnostics: Vec::new(),
        })
    }

    pub fn floors(&self) -> &[ThermalGrid] {
        &self.floors
    }

    pub fn floor_ids(&self) -> &[String] {
        &self.floor_ids
    }

    pub fn plant(&self) -> &HvacPlant {
        &self.plant
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn time(&self) -> DateTime<Utc> {
        self.time
    }

    pub fn last_diagnostics(&self) -> &[StepDiagnostics] {
        &self.last_diagnostics
    }

    pub fn zone_names(&self) -> Vec<String> {
        self.zone_locations.keys().cloned().collect()
    }

    /// Mean air temperature per zone.
    pub fn zone_mean_temperatures(&self) -> BTreeMap<String, f64> {
        self.zone_locations
            .iter()
            .map(|(name, &(fi, zi))| (name.clone(), self.floors[fi].zone_mean_by_index(zi)))
            .collect()
    }

    /// Initialize the state from an observation: air cells take their
    /// zone's reading, wall cells are interpolated from adjacent air in one
    /// pass (exterior walls average adjacent air with ambient), plant
    /// temperatures come from the observation, meters reset, and the rng is
    /// reseeded from the configured seed.
    pub fn reset(&mut self, initial: &Observation) -> Result<Observation, EngineError> {
        for zone in self.zone_locations.keys() {
            if !initial.zone_temperatures.contains_key(zone) {
                return Err(EngineError::MissingZoneReading { zone: zone.clone() });
            }
        }
        let ambient = initial.ambient_temperature;
        let all_mean = {
            let temps: Vec<f64> = initial.zone_temperatures.values().copied().collect();
            temps.iter().sum::<f64>() / temps.len() as f64
        };

        for grid in self.floors.iter_mut() {
            // Air first, so the wall pass sees final zone temperatures.
            let zone_temp_of: Vec<f64> = grid
                .zone_names()
                .iter()
                .map(|name| initial.zone_temperatures[name])
                .collect();
            for idx in 0..grid.cells().len() {
                if let CellKind::InteriorAir { zone } = grid.cells()[idx].kind {
                    grid.set_temperature(idx, zone_temp_of[zone]);
                }
            }
            let rows = grid.rows();
            let cols = grid.cols();
            let mut wall_temps: Vec<(usize, f64)> = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    let idx = grid.index(r, c);
                    let kind = grid.cells()[idx].kind;
                    if kind.is_air() {
                        continue;
                    }
                    if kind.is_boundary() {
                        wall_temps.push((idx, ambient));
                        continue;
                    }
                    let mut adjacent_air_sum = 0.0;
                    let mut adjacent_air_count = 0usize;
                    for (nr, nc) in [
                        (r.wrapping_sub(1), c),
                        (r + 1, c),
                        (r, c.wrapping_sub(1)),
                        (r, c + 1),
                    ] {
                        if nr >= rows || nc >= cols {
                            continue;
                        }
                        let n_idx = grid.index(nr, nc);
                        if grid.cells()[n_idx].kind.is_air() {
                            adjacent_air_sum += grid.cells()[n_idx].temperature;
                            adjacent_air_count += 1;
                        }
                    }
                    let t = match kind {
                        CellKind::ExteriorWall => {
                            if adjacent_air_count > 0 {
                                (adjacent_air_sum / adjacent_air_count as f64 + ambient) / 2.0
                            } else {
                                ambient
                            }
                        }
                        _ => {
                            if adjacent_air_count > 0 {
                                adjacent_air_sum / adjacent_air_count as f64
                            } else {
                                all_mean
                            }
                        }
                    };
                    wall_temps.push((idx, t));
                }
            }
            for (idx, t) in wall_temps {
                grid.set_temperature(idx, t);
            }
        }

        self.plant.reset(
            initial.supply_water_temperature,
            initial.supply_air_temperature,
        );
        self.plant.hot_water.supply_water_setpoint = initial.supply_water_setpoint;
        self.plant.air_handler.supply_air_setpoint = initial.supply_air_setpoint;
        for demand in self.thermostats.values_mut() {
            *demand = Demand::None;
        }
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.time = initial.timestamp;
        self.last_ambient = ambient;
        self.last_diagnostics.clear();
        Ok(self.observe())
    }

    /// Current observation without advancing time.
    pub fn observe(&self) -> Observation {
        Observation {
            timestamp: self.time,
            zone_temperatures: self.zone_mean_temperatures(),
            ambient_temperature: self.last_ambient,
            supply_air_temperature: self.plant.air_handler.supply_air_temperature,
            supply_water_temperature: self.plant.hot_water.supply_water_temperature,
            supply_air_setpoint: self.plant.air_handler.supply_air_setpoint,
            supply_water_setpoint: self.plant.hot_water.supply_water_setpoint,
            electricity_j: self.plant.meters.electricity,
            natural_gas_j: self.plant.meters.natural_gas,
            carbon_kg: self.plant.meters.carbon,
        }
    }

    /// Advance one five-minute step under the given action and ambient
    /// temperature.
    pub fn step(
        &mut self,
        action: &Action,
        ambient_t: f64,
    ) -> Result<(Observation, RewardBreakdown), EngineError> {
        let dt = STEP_SECONDS as f64;
        let zone_temps = self.zone_mean_temperatures();
        for (zone, demand) in self.thermostats.iter_mut() {
            *demand = thermostat_demand(*demand, zone_temps[zone], &self.comfort[zone]);
        }
        let (deliveries, meter_delta) = self.plant.step(
            &self.thermostats,
            &zone_temps,
            &PlantAction {
                supply_water_setpoint: action.supply_water_setpoint,
                supply_air_setpoint: action.supply_air_setpoint,
            },
            ambient_t,
            dt,
        )?;

        let mut floor_power: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.floors.len()];
        for delivery in &deliveries {
            if delivery.total_power == 0.0 {
                continue;
            }
            for &(floor, cell) in &self.vav_diffusers[delivery.vav_index] {
                floor_power[floor].push((cell, delivery.power_per_diffuser));
            }
        }

        self.last_diagnostics.clear();
        for (grid, power) in self.floors.iter_mut().zip(&floor_power) {
            self.last_diagnostics.push(grid.step(dt, power, ambient_t)?);
        }
        for grid in self.floors.iter_mut() {
            grid.shuffle_air(&mut self.rng);
        }

        self.time += chrono::Duration::seconds(STEP_SECONDS);
        self.last_ambient = ambient_t;
        let observation = self.observe();

        let mut comfort_k = 0.0;
        for (zone, spec) in &self.comfort {
            let t = observation.zone_temperatures[zone];
            comfort_k += (t - spec.cooling_setpoint).max(0.0) + (spec.heating_setpoint - t).max(0.0);
        }
        let carbon_cost = meter_delta.carbon / self.reward.carbon_scale_kg;
        let energy_cost =
            (meter_delta.electricity + meter_delta.natural_gas) / self.reward.energy_scale_j;
        let comfort_cost = comfort_k / self.reward.comfort_scale_k;
        let weights = (
            self.reward.carbon_weight,
            self.reward.energy_weight,
            self.reward.comfort_weight,
        );
        let total = -(weights.0 * carbon_cost + weights.1 * energy_cost + weights.2 * comfort_cost);
        Ok((
            observation,
            RewardBreakdown {
                carbon_cost,
                energy_cost,
                comfort_cost,
                weights,
                total,
            },
        ))
    }

    /// Deterministic N-step rollout replaying recorded setpoints and
    /// ambient conditions: the sample at time t drives the step from t to
    /// t+5min. Both series must cover every needed lattice point.
    pub fn replay(
        &mut self,
        actions: &[(DateTime<Utc>, Action)],
        ambient: &[(DateTime<Utc>, f64)],
        n: usize,
    ) -> Result<Vec<(Observation, RewardBreakdown)>, EngineError> {
        let action_map = series_map(actions)?;
        let ambient_map = series_map(ambient)?;
        let mut trajectory = Vec::with_capacity(n);
        for _ in 0..n {
            let at = self.time;
            let key = at.timestamp();
            let action = *action_map
                .get(&key)
                .ok_or(EngineError::SeriesGap { expected: at })?;
            let t_amb = *ambient_map
                .get(&key)
                .ok_or(EngineError::SeriesGap { expected: at })?;
            trajectory.push(self.step(&action, t_amb)?);
        }
        Ok(trajectory)
    }
}

fn series_map<T: Copy>(
    series: &[(DateTime<Utc>, T)],
) -> Result<BTreeMap<i64, T>, EngineError> {
    let mut map = BTreeMap::new();
    for (timestamp, value) in series {
        if timestamp.timestamp().rem_euclid(STEP_SECONDS) != 0 {
            return Err(EngineError::MisalignedTimestamp {
                timestamp: *timestamp,
            });
        }
        map.insert(timestamp.timestamp(), *value);
    }
    Ok(map)
}
