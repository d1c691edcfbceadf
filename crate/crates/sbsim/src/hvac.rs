//! Energy-balance HVAC plant.
//!
//! An air handler tempers mixed fresh/recirculated air toward the supply-air
//! setpoint, a gas boiler maintains the hot-water loop toward the
//! supply-water setpoint, and a constant-COP chiller covers cooling load.
//! VAV boxes convert thermostat demand into per-diffuser thermal power:
//! cooling delivers supply air below zone temperature, heating adds
//! effectiveness-based reheat from the water loop. Supply temperatures track
//! their setpoints with a first-order lag. Fan, pump, compressor, and gas
//! draws accumulate into cumulative energy meters with carbon derived from
//! configurable emission factors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::AIR_HEAT_CAPACITY;

#[derive(Debug, Error, PartialEq)]
pub enum HvacError {
    /// The commanded setpoint is outside the configured actuator limits.
    #[error("{name} setpoint {value} K outside actuator limits [{min}, {max}] K")]
    ActuatorLimitViolation {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// Thermostat output for one zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Demand {
    #[default]
    None,
    Heating,
    Cooling,
}

/// Comfort band for one zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneComfortSpec {
    pub zone_id: String,
    /// T̂_z,min, K.
    pub heating_setpoint: f64,
    /// T̂_z,max, K.
    pub cooling_setpoint: f64,
    /// Hysteresis width, K: once active, demand persists until the zone
    /// temperature re-enters the band by this margin.
    pub deadband: f64,
}

impl ZoneComfortSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.heating_setpoint + self.deadband >= self.cooling_setpoint {
            return Err(format!(
                "zone `{}`: heating setpoint {} + deadband {} must stay below cooling setpoint {}",
                self.zone_id, self.heating_setpoint, self.deadband, self.cooling_setpoint
            ));
        }
        Ok(())
    }
}

/// Thermostat state machine: trigger at the setpoints, release only after
/// the zone temperature re-enters the band by the deadband.
pub fn thermostat_demand(previous: Demand, t_zone: f64, spec: &ZoneComfortSpec) -> Demand {
    match previous {
        Demand::Heating if t_zone < spec.heating_setpoint + spec.deadband => Demand::Heating,
        Demand::Cooling if t_zone > spec.cooling_setpoint - spec.deadband => Demand::Cooling,
        _ => {
            if t_zone < spec.heating_setpoint {
                Demand::Heating
            } else if t_zone > spec.cooling_setpoint {
                Demand::Cooling
            } else {
                Demand::None
            }
        }
    }
}

/// Mass-weighted mix of return and ambient air at equal specific heat.
pub fn mix_air(t_return: f64, t_ambient: f64, recirc_fraction: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&recirc_fraction));
    recirc_fraction * t_return + (1.0 - recirc_fraction) * t_ambient
}

/// Emission factors, kg CO₂e per joule of delivered energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactors {
    pub electricity_kg_per_j: f64,
    pub gas_kg_per_j: f64,
}

impl Default for EmissionFactors {
    fn default() -> Self {
        EmissionFactors {
            electricity_kg_per_j: 1.1e-7,
            gas_kg_per_j: 5.0e-8,
        }
    }
}

/// Carbon mass for the given energy use.
pub fn carbon_from_energy(electricity_j: f64, gas_j: f64, factors: &EmissionFactors) -> f64 {
    electricity_j * factors.electricity_kg_per_j + gas_j * factors.gas_kg_per_j
}

/// Cumulative energy and carbon meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyMeters {
    /// Fans + pumps + compressor, J.
    pub electricity: f64,
    /// Boiler fuel, J.
    pub natural_gas: f64,
    /// kg CO₂e.
    pub carbon: f64,
}

impl EnergyMeters {
    pub fn accumulate(&mut self, delta: &EnergyMeters) {
        self.electricity += delta.electricity;
        self.natural_gas += delta.natural_gas;
        self.carbon += delta.carbon;
    }
}

/// Per-device constants, normally parsed from the devices file.
#[derive(Debug, Clone, PartialEq)]
pub struct VavConstants {
    pub device_id: String,
    pub zone_id: String,
    /// Design mass flow at full damper, kg/s.
    pub design_flow: f64,
    /// Reheat coil effectiveness, 0..=1.
    pub reheat_effectiveness: f64,
    /// Ventilation-minimum damper fraction when there is no demand.
    pub min_damper: f64,
    /// Number of diffuser cells the delivered power is split across.
    pub diffuser_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AhuConstants {
    pub device_id: String,
    pub recirc_fraction: f64,
    pub intake_fan_power: f64,
    pub exhaust_fan_power: f64,
    pub supply_air_min: f64,
    pub supply_air_max: f64,
    /// Supply-air first-order lag time constant, s.
    pub lag_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoilerConstants {
    pub device_id: String,
    pub efficiency: f64,
    pub pump_power: f64,
    pub supply_water_min: f64,
    pub supply_water_max: f64,
    pub lag_seconds: f64,
    /// Water-loop distribution loss as a fraction of delivered reheat.
    pub loop_loss_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChillerConstants {
    pub device_id: String,
    pub cop: f64,
    pub pump_power: f64,
}

/// Air handler state (constants folded in for observability).
#[derive(Debug, Clone, PartialEq)]
pub struct AirHandlerState {
    pub supply_air_setpoint: f64,
    pub supply_air_temperature: f64,
    pub intake_flow: f64,
    pub exhaust_flow: f64,
    pub recirc_flow: f64,
    pub exhaust_temperature: f64,
    pub mixed_air_temperature: f64,
    pub intake_fan_power: f64,
    pub exhaust_fan_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HotWaterState {
    pub supply_water_setpoint: f64,
    pub supply_water_temperature: f64,
    pub boiler_gas_power: f64,
    pub pump_power: f64,
    pub boiler_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChillerState {
    pub compressor_power: f64,
    pub coolant_pump_power: f64,
    pub coefficient_of_performance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VavState {
    pub device_id: String,
    pub zone_id: String,
    pub design_flow: f64,
    pub damper_fraction: f64,
    pub reheat_effectiveness: f64,
    /// Thermal power delivered to the zone this step, W (signed).
    pub supplied_power: f64,
    /// Return-air enthalpy flow relative to the supply stream, W
    /// (diagnostic only; does not feed the grid).
    pub recirculated_power: f64,
}

/// Commanded setpoints for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantAction {
    /// T̂_b, K.
    pub supply_water_setpoint: f64,
    /// T̂_s, K.
    pub supply_air_setpoint: f64,
}

/// Power a VAV delivers this step, already split across its diffusers.
#[derive(Debug, Clone, PartialEq)]
pub struct VavDelivery {
    /// Index into `HvacPlant::vavs`.
    pub vav_index: usize,
    pub zone_id: String,
    pub total_power: f64,
    pub power_per_diffuser: f64,
}

/// The full plant: air handler + hot-water loop + chiller + VAV set.
#[derive(Debug, Clone, PartialEq)]
pub struct HvacPlant {
    pub air_handler: AirHandlerState,
    pub hot_water: HotWaterState,
    pub chiller: ChillerState,
    pub vavs: Vec<VavState>,
    pub meters: EnergyMeters,
    ahu_constants: AhuConstants,
    boiler_constants: BoilerConstants,
    chiller_constants: ChillerConstants,
    vav_constants: Vec<VavConstants>,
    emission_factors: EmissionFactors,
}

impl HvacPlant {
    /// Assemble a plant; `vavs` must already be sorted by device id so the
    /// delivery order is deterministic.
    pub fn new(
        ahu: AhuConstants,
        boiler: BoilerConstants,
        chiller: ChillerConstants,
        vavs: Vec<VavConstants>,
        emission_factors: EmissionFactors,
    ) -> Self {
        let initial_supply_air = (ahu.supply_air_min + ahu.supply_air_max) / 2.0;
        let initial_supply_water = (boiler.supply_water_min + boiler.supply_water_max) / 2.0;
        let vav_states = vavs
            .iter()
            .map(|v| VavState {
                device_id: v.device_id.clone(),
                zone_id: v.zone_id.clone(),
                design_flow: v.design_flow,
                damper_fraction: v.min_damper,
                reheat_effectiveness: v.reheat_effectiveness,
                supplied_power: 0.0,
                recirculated_power: 0.0,
            })
            .collect();
        HvacPlant {
            air_handler: AirHandlerState {
                supply_air_setpoint: initial_supply_air,
                supply_air_temperature: initial_supply_air,
                intake_flow: 0.0,
                exhaust_flow: 0.0,
                recirc_flow: 0.0,
                exhaust_temperature: initial_supply_air,
                mixed_air_temperature: initial_supply_air,
                intake_fan_power: ahu.intake_fan_power,
                exhaust_fan_power: ahu.exhaust_fan_power,
            },
            hot_water: HotWaterState {
                supply_water_setpoint: initial_supply_water,
                supply_water_temperature: initial_supply_water,
                boiler_gas_power: 0.0,
                pump_power: boiler.pump_power,
                boiler_efficiency: boiler.efficiency,
            },
            chiller: ChillerState {
                compressor_power: 0.0,
                coolant_pump_power: chiller.pump_power,
                coefficient_of_performance: chiller.cop,
            },
            vavs: vav_states,
            meters: EnergyMeters::default(),
            ahu_constants: ahu,
            boiler_constants: boiler,
            chiller_constants: chiller,
            vav_constants: vavs,
            emission_factors,
        }
    }

    pub fn vav_constants(&self) -> &[VavConstants] {
        &self.vav_constants
    }

    pub fn actuator_limits(&self) -> ((f64, f64), (f64, f64)) {
        (
            (
                self.boiler_constants.supply_water_min,
                self.boiler_constants.supply_water_max,
            ),
            (
                self.ahu_constants.supply_air_min,
                self.ahu_constants.supply_air_max,
            ),
        )
    }

    /// Reset supply temperatures/setpoints to the given values and zero the
    /// meters and per-step diagnostics.
    pub fn reset(&mut self, supply_water: f64, supply_air: f64) {
        self.hot_water.supply_water_temperature = supply_water;
        self.hot_water.supply_water_setpoint = supply_water;
        self.hot_water.boiler_gas_power = 0.0;
        self.air_handler.supply_air_temperature = supply_air;
        self.air_handler.supply_air_setpoint = supply_air;
        self.air_handler.intake_flow = 0.0;
        self.air_handler.exhaust_flow = 0.0;
        self.air_handler.recirc_flow = 0.0;
        self.air_handler.exhaust_temperature = supply_air;
        self.air_handler.mixed_air_temperature = supply_air;
        self.chiller.compressor_power = 0.0;
        self.meters = EnergyMeters::default();
        for (state, constants) in self.vavs.iter_mut().zip(&self.vav_constants) {
            state.damper_fraction = constants.min_damper;
            state.supplied_power = 0.0;
            state.recirculated_power = 0.0;
        }
    }

    fn check_limits(&self, action: &PlantAction) -> Result<(), HvacError> {
        let b = &self.boiler_constants;
        if !(b.supply_water_min..=b.supply_water_max).contains(&action.supply_water_setpoint) {
            return Err(HvacError::ActuatorLimitViolation {
                name: "supply water",
                value: action.supply_water_setpoint,
                min: b.supply_water_min,
                max: b.supply_water_max,
            });
        }
        let a = &self.ahu_constants;
        if !(a.supply_air_min..=a.supply_air_max).contains(&action.supply_air_setpoint) {
            return Err(HvacError::ActuatorLimitViolation {
                name: "supply air",
                value: action.supply_air_setpoint,
                min: a.supply_air_min,
                max: a.supply_air_max,
            });
        }
        Ok(())
    }

    /// Advance the plant by `dt` seconds: relax supply temperatures toward
    /// the commanded setpoints, convert zone demands into per-diffuser
    /// thermal power, and meter the energy drawn while doing so. Cooling is
    /// clamped non-positive and reheat non-negative so delivered power never
    /// opposes the demand that requested it.
    pub fn step(
        &mut self,
        demands: &BTreeMap<String, Demand>,
        zone_temperatures: &BTreeMap<String, f64>,
        action: &PlantAction,
        t_ambient: f64,
        dt: f64,
    ) -> Result<(Vec<VavDelivery>, EnergyMeters), HvacError> {
        assert!(dt > 0.0);
        self.check_limits(action)?;

        // First-order lag toward the commanded setpoints (exact
        // discretization, so tracking error decays monotonically).
        self.hot_water.supply_water_setpoint = action.supply_water_setpoint;
        self.air_handler.supply_air_setpoint = action.supply_air_setpoint;
        let relax = |t: f64, target: f64, tau: f64| t + (1.0 - (-dt / tau).exp()) * (target - t);
        self.hot_water.supply_water_temperature = relax(
            self.hot_water.supply_water_temperature,
            action.supply_water_setpoint,
            self.boiler_constants.lag_seconds,
        );
        self.air_handler.supply_air_temperature = relax(
            self.air_handler.supply_air_temperature,
            action.supply_air_setpoint,
            self.ahu_constants.lag_seconds,
        );
        let t_supply_air = self.air_handler.supply_air_temperature;
        let t_supply_water = self.hot_water.supply_water_temperature;

        let mut deliveries = Vec::with_capacity(self.vavs.len());
        let mut total_flow = 0.0;
        let mut flow_weighted_return = 0.0;
        let mut cooling_delivered = 0.0;
        let mut reheat_delivered = 0.0;
        let mut any_heating = false;
        let mut any_cooling = false;
        for (i, constants) in self.vav_constants.iter().enumerate() {
            let demand = demands
                .get(&constants.zone_id)
                .copied()
                .unwrap_or(Demand::None);
            let t_zone = zone_temperatures[&constants.zone_id];
            let damper = match demand {
                Demand::None => constants.min_damper,
                _ => 1.0,
            };
            let flow = constants.design_flow * damper;
            let supplied = match demand {
                Demand::None => 0.0,
                Demand::Cooling => {
                    any_cooling = true;
                    (flow * AIR_HEAT_CAPACITY * (t_supply_air - t_zone)).min(0.0)
                }
                Demand::Heating => {
                    any_heating = true;
                    (constants.reheat_effectiveness
                        * flow
                        * AIR_HEAT_CAPACITY
                        * (t_supply_water - t_zone))
                        .max(0.0)
                }
            };
            if supplied < 0.0 {
                cooling_delivered += -supplied;
            } else {
                reheat_delivered += supplied;
            }
            total_flow += flow;
            flow_weighted_return += flow * t_zone;

            let state = &mut self.vavs[i];
            state.damper_fraction = damper;
            state.supplied_power = supplied;
            state.recirculated_power = flow * AIR_HEAT_CAPACITY * (t_zone - t_supply_air);
            deliveries.push(VavDelivery {
                vav_index: i,
                zone_id: constants.zone_id.clone(),
                total_power: supplied,
                power_per_diffuser: supplied / constants.diffuser_count as f64,
            });
        }

        // Air-side mass balance: recirculation is a fixed fraction of the
        // supply flow, the rest is drawn fresh and exhausted.
        let t_return = if total_flow > 0.0 {
            flow_weighted_return / total_flow
        } else {
            let n = zone_temperatures.len().max(1);
            zone_temperatures.values().sum::<f64>() / n as f64
        };
        let recirc = self.ahu_constants.recirc_fraction;
        self.air_handler.recirc_flow = recirc * total_flow;
        self.air_handler.intake_flow = (1.0 - recirc) * total_flow;
        self.air_handler.exhaust_flow = self.air_handler.intake_flow;
        self.air_handler.exhaust_temperature = t_return;
        self.air_handler.mixed_air_temperature = mix_air(t_return, t_ambient, recirc);

        // Electrical and gas draws.
        let fans = if total_flow > 0.0 {
            self.ahu_constants.intake_fan_power + self.ahu_constants.exhaust_fan_power
        } else {
            0.0
        };
        let water_pump = if any_heating {
            self.boiler_constants.pump_power
        } else {
            0.0
        };
        let coolant_pump = if any_cooling {
            self.chiller_constants.pump_power
        } else {
            0.0
        };
        let compressor = cooling_delivered / self.chiller_constants.cop;
        self.chiller.compressor_power = compressor;

        let loop_loss = self.boiler_constants.loop_loss_fraction * reheat_delivered;
        let boiler_heat = reheat_delivered + loop_loss;
        let gas_power = boiler_heat / self.boiler_constants.efficiency;
        self.hot_water.boiler_gas_power = gas_power;

        let electricity = (fans + water_pump + coolant_pump + compressor) * dt;
        let gas = gas_power * dt;
        let delta = EnergyMeters {
            electricity,
            natural_gas: gas,
            carbon: carbon_from_energy(electricity, gas, &self.emission_factors),
        };
        self.meters.accumulate(&delta);
        Ok((deliveries, delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> ZoneComfortSpec {
        ZoneComfortSpec {
            zone_id: "A".into(),
            heating_setpoint: 293.15,
            cooling_setpoint: 297.15,
            deadband: 0.5,
        }
    }

    fn test_plant(vav_zones: &[&str]) -> HvacPlant {
        let vavs = vav_zones
            .iter()
            .enumerate()
            .map(|(i, z)| VavConstants {
                device_id: format!("vav-{i}"),
                zone_id: (*z).to_string(),
                design_flow: 0.5,
                reheat_effectiveness: 0.8,
                min_damper: 0.2,
                diffuser_count: 2,
            })
            .collect();
        HvacPlant::new(
            AhuConstants {
                device_id: "ahu".into(),
                recirc_fraction: 0.3,
                intake_fan_power: 1500.0,
                exhaust_fan_power: 1000.0,
                supply_air_min: 285.15,
                supply_air_max: 303.15,
                lag_seconds: 900.0,
            },
            BoilerConstants {
                device_id: "boiler".into(),
                efficiency: 0.85,
                pump_power: 500.0,
                supply_water_min: 303.15,
                supply_water_max: 333.15,
                lag_seconds: 900.0,
                loop_loss_fraction: 0.05,
            },
            ChillerConstants {
                device_id: "chiller".into(),
                cop: 3.0,
                pump_power: 400.0,
            },
            vavs,
            EmissionFactors::default(),
        )
    }

    #[test]
    fn thermostat_inside_band_is_none() {
        assert_eq!(thermostat_demand(Demand::None, 295.15, &spec()), Demand::None);
    }

    #[test]
    fn thermostat_above_upper_setpoint_cools() {
        assert_eq!(
            thermostat_demand(Demand::None, 297.65, &spec()),
            Demand::Cooling
        );
    }

    #[test]
    fn thermostat_hysteresis_holds_heating_within_deadband() {
        // crossing the heating setpoint downward, then re-entering the band
        // by less than the deadband: demand must stay Heating throughout
        let s = spec();
        let trace = [293.5, 293.0, 292.8, 293.3, 293.5];
        let expected = [
            Demand::None,
            Demand::Heating,
            Demand::Heating,
            Demand::Heating,
            Demand::Heating,
        ];
        let mut demand = Demand::None;
        for (t, want) in trace.iter().zip(expected.iter()) {
            demand = thermostat_demand(demand, *t, &s);
            assert_eq!(demand, *want, "at T_z = {t}");
        }
        // crossing by the full deadband releases
        demand = thermostat_demand(demand, 293.15 + 0.5, &s);
        assert_eq!(demand, Demand::None);
    }

    #[test]
    fn mix_air_endpoints_and_mean() {
        assert_eq!(mix_air(295.15, 303.15, 0.0), 303.15);
        assert_eq!(mix_air(295.15, 303.15, 1.0), 295.15);
        assert_relative_eq!(mix_air(295.15, 303.15, 0.5), 299.15);
    }

    #[test]
    fn carbon_from_energy_hand_values() {
        let f = EmissionFactors {
            electricity_kg_per_j: 1.1e-7,
            gas_kg_per_j: 5.0e-8,
        };
        assert_eq!(carbon_from_energy(0.0, 0.0, &f), 0.0);
        assert_relative_eq!(carbon_from_energy(3.6e6, 7.2e6, &f), 0.756, epsilon = 1e-12);
        let gas_only = EmissionFactors {
            electricity_kg_per_j: 0.0,
            gas_kg_per_j: 5.0e-8,
        };
        assert_eq!(
            carbon_from_energy(1e9, 7.2e6, &gas_only),
            carbon_from_energy(0.0, 7.2e6, &gas_only)
        );
    }

    #[test]
    fn idle_plant_accrues_only_fan_energy() {
        let mut plant = test_plant(&["A", "B"]);
        let demands = BTreeMap::from([("A".into(), Demand::None), ("B".into(), Demand::None)]);
        let temps = BTreeMap::from([("A".into(), 295.0), ("B".into(), 295.0)]);
        let action = PlantAction {
            supply_water_setpoint: 318.15,
            supply_air_setpoint: 287.15,
        };
        let (deliveries, delta) = plant.step(&demands, &temps, &action, 300.0, 300.0).unwrap();
        assert!(deliveries.iter().all(|d| d.total_power == 0.0));
        assert_eq!(delta.electricity, (1500.0 + 1000.0) * 300.0);
        assert_eq!(delta.natural_gas, 0.0);
    }

    #[test]
    fn cooling_delivery_matches_hand_value() {
        let mut plant = test_plant(&["A"]);
        // hold the supply air exactly 10 K below the zone
        plant.air_handler.supply_air_temperature = 285.0;
        plant.ahu_constants.lag_seconds = f64::INFINITY; // freeze the lag
        let demands = BTreeMap::from([("A".into(), Demand::Cooling)]);
        let temps = BTreeMap::from([("A".into(), 295.0)]);
        let action = PlantAction {
            supply_water_setpoint: 318.15,
            supply_air_setpoint: 287.15,
        };
        let (deliveries, delta) = plant.step(&demands, &temps, &action, 300.0, 300.0).unwrap();
        assert_relative_eq!(deliveries[0].total_power, 0.5 * 1006.0 * (-10.0));
        assert_relative_eq!(deliveries[0].power_per_diffuser, -5030.0 / 2.0);
        // compressor = |cooling| / COP, plus fans and coolant pump
        let expected_electric = (1500.0 + 1000.0 + 400.0 + 5030.0 / 3.0) * 300.0;
        assert_relative_eq!(delta.electricity, expected_electric, max_relative = 1e-12);
    }

    #[test]
    fn heating_meters_cross_check_by_independent_summation() {
        let mut plant = test_plant(&["A", "B"]);
        let demands = BTreeMap::from([
            ("A".into(), Demand::Heating),
            ("B".into(), Demand::Heating),
        ]);
        let temps = BTreeMap::from([("A".into(), 291.0), ("B".into(), 292.0)]);
        let action = PlantAction {
            supply_water_setpoint: 330.0,
            supply_air_setpoint: 287.15,
        };
        let (deliveries, delta) = plant.step(&demands, &temps, &action, 280.0, 300.0).unwrap();

        let reheat: f64 = deliveries.iter().map(|d| d.total_power.max(0.0)).sum();
        assert!(reheat > 0.0);
        let expected_gas = (reheat * 1.05) / 0.85 * 300.0;
        assert_relative_eq!(delta.natural_gas, expected_gas, max_relative = 1e-12);
        // no compressor draw in a heating-only step
        let expected_electric = (1500.0 + 1000.0 + 500.0) * 300.0;
        assert_relative_eq!(delta.electricity, expected_electric, max_relative = 1e-12);
        assert_relative_eq!(
            delta.carbon,
            carbon_from_energy(delta.electricity, delta.natural_gas, &EmissionFactors::default()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn zone_without_demand_receives_exactly_zero_power() {
        let mut plant = test_plant(&["A", "B"]);
        let demands = BTreeMap::from([
            ("A".into(), Demand::Heating),
            ("B".into(), Demand::None),
        ]);
        let temps = BTreeMap::from([("A".into(), 291.0), ("B".into(), 295.0)]);
        let action = PlantAction {
            supply_water_setpoint: 325.0,
            supply_air_setpoint: 287.15,
        };
        for _ in 0..10 {
            let (deliveries, _) = plant.step(&demands, &temps, &action, 285.0, 300.0).unwrap();
            assert!(deliveries[0].total_power > 0.0);
            assert_eq!(deliveries[1].total_power, 0.0);
            assert_eq!(deliveries[1].power_per_diffuser, 0.0);
        }
    }

    #[test]
    fn sign_discipline_under_lagging_supply_temperatures() {
        // supply air still warmer than the zone while cooling is demanded:
        // the delivered power must clamp to zero, never heat the zone
        let mut plant = test_plant(&["A"]);
        plant.air_handler.supply_air_temperature = 300.0;
        let demands = BTreeMap::from([("A".into(), Demand::Cooling)]);
        let temps = BTreeMap::from([("A".into(), 295.0)]);
        let action = PlantAction {
            supply_water_setpoint: 318.15,
            supply_air_setpoint: 285.15,
        };
        let (deliveries, _) = plant.step(&demands, &temps, &action, 300.0, 300.0).unwrap();
        assert!(deliveries[0].total_power <= 0.0);

        // and symmetrically for heating with a cold water loop
        let mut plant = test_plant(&["A"]);
        plant.hot_water.supply_water_temperature = 290.0;
        let demands = BTreeMap::from([("A".into(), Demand::Heating)]);
        let (deliveries, _) = plant
            .step(
                &demands,
                &temps,
                &PlantAction {
                    supply_water_setpoint: 303.15,
                    supply_air_setpoint: 287.15,
                },
                300.0,
                300.0,
            )
            .unwrap();
        assert!(deliveries[0].total_power >= 0.0);
    }

    #[test]
    fn raising_water_setpoint_never_reduces_gas_use() {
        let run = |setpoint: f64| {
            let mut plant = test_plant(&["A"]);
            let demands = BTreeMap::from([("A".into(), Demand::Heating)]);
            let temps = BTreeMap::from([("A".into(), 291.0)]);
            let mut gas = 0.0;
            for _ in 0..24 {
                let (_, delta) = plant
                    .step(
                        &demands,
                        &temps,
                        &PlantAction {
                            supply_water_setpoint: setpoint,
                            supply_air_setpoint: 287.15,
                        },
                        280.0,
                        300.0,
                    )
                    .unwrap();
                gas += delta.natural_gas;
            }
            gas
        };
        let low = run(310.0);
        let high = run(325.0);
        assert!(high >= low);
    }

    #[test]
    fn supply_water_tracking_error_decays_monotonically() {
        let mut plant = test_plant(&["A"]);
        plant.hot_water.supply_water_temperature = 305.0;
        let demands = BTreeMap::from([("A".into(), Demand::None)]);
        let temps = BTreeMap::from([("A".into(), 295.0)]);
        let action = PlantAction {
            supply_water_setpoint: 330.0,
            supply_air_setpoint: 287.15,
        };
        let mut err = (plant.hot_water.supply_water_temperature - 330.0).abs();
        for _ in 0..20 {
            plant.step(&demands, &temps, &action, 295.0, 300.0).unwrap();
            let next = (plant.hot_water.supply_water_temperature - 330.0).abs();
            assert!(next < err);
            err = next;
        }
    }

    #[test]
    fn out_of_limit_action_is_rejected() {
        let mut plant = test_plant(&["A"]);
        let demands = BTreeMap::from([("A".into(), Demand::None)]);
        let temps = BTreeMap::from([("A".into(), 295.0)]);
        let err = plant
            .step(
                &demands,
                &temps,
                &PlantAction {
                    supply_water_setpoint: 400.0,
                    supply_air_setpoint: 287.15,
                },
                295.0,
                300.0,
            )
            .unwrap_err();
        assert!(matches!(err, HvacError::ActuatorLimitViolation { .. }));
    }

    #[test]
    fn meter_accumulation_closes_over_many_steps() {
        let mut plant = test_plant(&["A"]);
        let temps = BTreeMap::from([("A".into(), 291.0)]);
        let action = PlantAction {
            supply_water_setpoint: 320.0,
            supply_air_setpoint: 287.15,
        };
        let mut summed = EnergyMeters::default();
        for step in 0..72 {
            let demand = if step % 3 == 0 {
                Demand::Heating
            } else {
                Demand::None
            };
            let demands = BTreeMap::from([("A".into(), demand)]);
            let (_, delta) = plant.step(&demands, &temps, &action, 285.0, 300.0).unwrap();
            summed.accumulate(&delta);
        }
        // independent accumulation in the same order is bitwise identical
        assert_eq!(summed, plant.meters);
    }
}
