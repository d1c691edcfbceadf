//! Telemetry CSV ingestion and validation.
//!
//! The on-disk format is long-form CSV with header
//! `timestamp,device_id,field,value` and ISO-8601 timestamps. Zone air
//! temperatures carry the zone name in `device_id`; the zone set is
//! inferred from those rows and every timestamp must cover all zones.
//! Unrecognized fields are ignored so real exports with extra channels
//! load unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::engine::STEP_SECONDS;

pub const FIELD_ZONE_TEMPERATURE: &str = "zone_air_temperature";
pub const FIELD_AMBIENT: &str = "ambient_temperature";
pub const FIELD_WATER_SETPOINT: &str = "supply_water_setpoint";
pub const FIELD_AIR_SETPOINT: &str = "supply_air_setpoint";
pub const FIELD_ELECTRICITY: &str = "electricity_j";
pub const FIELD_GAS: &str = "natural_gas_j";

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("timestamp {timestamp} is not on the five-minute lattice")]
    MisalignedTimestamp { timestamp: DateTime<Utc> },
    #[error("timestamp {timestamp} is missing a reading for zone `{zone}`")]
    MissingZoneReading {
        timestamp: DateTime<Utc>,
        zone: String,
    },
    #[error("duplicate record at {timestamp} for device `{device}` field `{field}`")]
    DuplicateRecord {
        timestamp: DateTime<Utc>,
        device: String,
        field: String,
    },
    #[error("timestamp {timestamp} is missing field `{field}`")]
    MissingField {
        timestamp: DateTime<Utc>,
        field: String,
    },
    #[error("series is missing the record at {expected}")]
    SeriesGap { expected: DateTime<Utc> },
    #[error("record {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("telemetry file is empty")]
    Empty,
    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One time-aligned record covering all zones.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub timestamp: DateTime<Utc>,
    pub zone_temperatures: BTreeMap<String, f64>,
    pub ambient_temperature: f64,
    pub supply_water_setpoint: f64,
    pub supply_air_setpoint: f64,
    pub electricity_j: Option<f64>,
    pub natural_gas_j: Option<f64>,
}

/// Time-ordered series of records at five-minute spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    pub records: Vec<TelemetryRecord>,
    /// Sorted zone names, inferred from the zone-temperature rows.
    pub zones: Vec<String>,
}

impl TelemetrySeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, TelemetryError> {
        let file = std::fs::File::open(path).map_err(|cause| TelemetryError::Io {
            path: path.to_path_buf(),
            cause,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, TelemetryError> {
        let mut csv_reader = csv::ReaderBuilder::new().from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let expected = ["timestamp", "device_id", "field", "value"];
        if headers.iter().ne(expected) {
            return Err(TelemetryError::Malformed {
                line: 1,
                message: format!(
                    "header must be `{}`, got `{}`",
                    expected.join(","),
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }

        struct Group {
            zones: BTreeMap<String, f64>,
            scalars: BTreeMap<String, f64>,
        }
        let mut groups: BTreeMap<i64, Group> = BTreeMap::new();
        let mut seen: BTreeSet<(i64, String, String)> = BTreeSet::new();
        let mut all_zones: BTreeSet<String> = BTreeSet::new();

        for (i, row) in csv_reader.records().enumerate() {
            let line = i + 2; // header is line 1
            let row = row?;
            if row.len() != 4 {
                return Err(TelemetryError::Malformed {
                    line,
                    message: format!("expected 4 columns, got {}", row.len()),
                });
            }
            let timestamp = parse_timestamp(&row[0], line)?;
            if timestamp.timestamp().rem_euclid(STEP_SECONDS) != 0 {
                return Err(TelemetryError::MisalignedTimestamp { timestamp });
            }
            let device = row[1].to_string();
            let field = row[2].to_string();
            let value: f64 = row[3].parse().map_err(|_| TelemetryError::Malformed {
                line,
                message: format!("`{}` is not a number", &row[3]),
            })?;
            if !seen.insert((timestamp.timestamp(), device.clone(), field.clone())) {
                return Err(TelemetryError::DuplicateRecord {
                    timestamp,
                    device,
                    field,
                });
            }
            let group = groups.entry(timestamp.timestamp()).or_insert_with(|| Group {
                zones: BTreeMap::new(),
                scalars: BTreeMap::new(),
            });
            match field.as_str() {
                FIELD_ZONE_TEMPERATURE => {
                    if group.zones.insert(device.clone(), value).is_some() {
                        return Err(TelemetryError::DuplicateRecord {
                            timestamp,
                            device,
                            field,
                        });
                    }
                    all_zones.insert(device);
                }
                FIELD_AMBIENT | FIELD_WATER_SETPOINT | FIELD_AIR_SETPOINT | FIELD_ELECTRICITY
                | FIELD_GAS => {
                    // one value per scalar field per timestamp, whatever
                    // device reports it
                    let previous = group.scalars.insert(field.clone(), value);
                    if previous.is_some() {
                        return Err(TelemetryError::DuplicateRecord {
                            timestamp,
                            device,
                            field,
                        });
                    }
                }
                _ => {} // extra channels are ignored
            }
        }

        if groups.is_empty() {
            return Err(TelemetryError::Empty);
        }

        let mut records = Vec::with_capacity(groups.len());
        for (ts, group) in groups {
            let timestamp = DateTime::<Utc>::from_timestamp(ts, 0).unwrap();
            for zone in &all_zones {
                if !group.zones.contains_key(zone) {
                    return Err(TelemetryError::MissingZoneReading {
                        timestamp,
                        zone: zone.clone(),
                    });
                }
            }
            let scalar = |field: &str| {
                group
                    .scalars
                    .get(field)
                    .copied()
                    .ok_or_else(|| TelemetryError::MissingField {
                        timestamp,
                        field: field.to_string(),
                    })
            };
            records.push(TelemetryRecord {
                timestamp,
                zone_temperatures: group.zones,
                ambient_temperature: scalar(FIELD_AMBIENT)?,
                supply_water_setpoint: scalar(FIELD_WATER_SETPOINT)?,
                supply_air_setpoint: scalar(FIELD_AIR_SETPOINT)?,
                electricity_j: group.scalars.get(FIELD_ELECTRICITY).copied(),
                natural_gas_j: group.scalars.get(FIELD_GAS).copied(),
            });
        }
        Ok(TelemetrySeries {
            records,
            zones: all_zones.into_iter().collect(),
        })
    }

    /// Serialize in the load format; floats use shortest round-trip
    /// formatting so a write/read cycle is bit-exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,device_id,field,value\n");
        for record in &self.records {
            let ts = record
                .timestamp
                .to_rfc3339_opts(SecondsFormat::Secs, true);
            for (zone, value) in &record.zone_temperatures {
                out.push_str(&format!("{ts},{zone},{FIELD_ZONE_TEMPERATURE},{value}\n"));
            }
            out.push_str(&format!(
                "{ts},outdoor,{FIELD_AMBIENT},{}\n",
                record.ambient_temperature
            ));
            out.push_str(&format!(
                "{ts},boiler,{FIELD_WATER_SETPOINT},{}\n",
                record.supply_water_setpoint
            ));
            out.push_str(&format!(
                "{ts},ahu,{FIELD_AIR_SETPOINT},{}\n",
                record.supply_air_setpoint
            ));
            if let Some(v) = record.electricity_j {
                out.push_str(&format!("{ts},meter,{FIELD_ELECTRICITY},{v}\n"));
            }
            if let Some(v) = record.natural_gas_j {
                out.push_str(&format!("{ts},meter,{FIELD_GAS},{v}\n"));
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), TelemetryError> {
        std::fs::write(path, self.to_csv()).map_err(|cause| TelemetryError::Io {
            path: path.to_path_buf(),
            cause,
        })
    }

    /// A sub-series of `n` records starting at `start`.
    pub fn window(&self, start: usize, n: usize) -> Result<TelemetrySeries, super::CalibError> {
        if start + n > self.records.len() || n == 0 {
            return Err(super::CalibError::Invalid(format!(
                "window [{start}, {}) exceeds the {}-record series",
                start + n,
                self.records.len()
            )));
        }
        Ok(TelemetrySeries {
            records: self.records[start..start + n].to_vec(),
            zones: self.zones.clone(),
        })
    }

    /// Records must sit exactly one step apart (replay needs a gap-free
    /// window).
    pub fn check_contiguous(&self) -> Result<(), TelemetryError> {
        for pair in self.records.windows(2) {
            let expected = pair[0].timestamp.timestamp() + STEP_SECONDS;
            if pair[1].timestamp.timestamp() != expected {
                return Err(TelemetryError::SeriesGap {
                    expected: DateTime::<Utc>::from_timestamp(expected, 0).unwrap(),
                });
            }
        }
        Ok(())
    }
}

fn parse_timestamp(text: &str, line: usize) -> Result<DateTime<Utc>, TelemetryError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| TelemetryError::Malformed {
            line,
            message: format!("`{text}` is not an ISO-8601 timestamp"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv() -> String {
        let mut rows = String::from("timestamp,device_id,field,value\n");
        for minute in [40, 45, 50] {
            let ts = format!("2023-07-06T01:{minute}:00Z");
            rows.push_str(&format!("{ts},A,zone_air_temperature,294.5\n"));
            rows.push_str(&format!("{ts},B,zone_air_temperature,296.25\n"));
            rows.push_str(&format!("{ts},outdoor,ambient_temperature,288.0\n"));
            rows.push_str(&format!("{ts},boiler,supply_water_setpoint,318.15\n"));
            rows.push_str(&format!("{ts},ahu,supply_air_setpoint,287.15\n"));
        }
        rows
    }

    #[test]
    fn loads_and_pivots_records() {
        let series = TelemetrySeries::from_reader(sample_csv().as_bytes()).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.zones, vec!["A".to_string(), "B".to_string()]);
        let first = &series.records[0];
        assert_eq!(first.zone_temperatures["A"], 294.5);
        assert_eq!(first.ambient_temperature, 288.0);
        assert_eq!(first.electricity_j, None);
    }

    #[test]
    fn misaligned_timestamp_is_rejected() {
        let csv = "timestamp,device_id,field,value\n2023-07-06T01:43:00Z,A,zone_air_temperature,294.5\n";
        let err = TelemetrySeries::from_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, TelemetryError::MisalignedTimestamp { .. }));
    }

    #[test]
    fn duplicate_record_is_rejected() {
        let mut csv = sample_csv();
        csv.push_str("2023-07-06T01:40:00Z,A,zone_air_temperature,295.0\n");
        let err = TelemetrySeries::from_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, TelemetryError::DuplicateRecord { .. }));
    }

    #[test]
    fn missing_zone_reading_is_rejected() {
        let mut csv = sample_csv();
        csv.push_str("2023-07-06T01:55:00Z,A,zone_air_temperature,294.5\n");
        csv.push_str("2023-07-06T01:55:00Z,outdoor,ambient_temperature,288.0\n");
        csv.push_str("2023-07-06T01:55:00Z,boiler,supply_water_setpoint,318.15\n");
        csv.push_str("2023-07-06T01:55:00Z,ahu,supply_air_setpoint,287.15\n");
        let err = TelemetrySeries::from_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, TelemetryError::MissingZoneReading { zone, .. } if zone == "B"));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let mut csv = sample_csv();
        csv.push_str("2023-07-06T01:40:00Z,vav-3,damper_position,0.4\n");
        let series = TelemetrySeries::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(series.len(), 3);
    }

    #[test]
    fn roundtrips_bit_exactly_through_csv() {
        let mut series = TelemetrySeries::from_reader(sample_csv().as_bytes()).unwrap();
        // a value with no short decimal representation
        series.records[0]
            .zone_temperatures
            .insert("A".into(), 294.15000000000003);
        let again = TelemetrySeries::from_reader(series.to_csv().as_bytes()).unwrap();
        assert_eq!(series, again);
    }

    #[test]
    fn window_and_contiguity() {
        let series = TelemetrySeries::from_reader(sample_csv().as_bytes()).unwrap();
        let window = series.window(1, 2).unwrap();
        assert_eq!(window.len(), 2);
        window.check_contiguous().unwrap();
        assert!(series.window(2, 2).is_err());
    }
}
