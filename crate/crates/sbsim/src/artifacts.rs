//! Evaluation render artifacts: per-floor difference heatmaps and the
//! drift-distribution series, each as a CSV with an image twin where
//! applicable.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::grid::{CellKind, ThermalGrid};
use crate::stats::{quartiles, Quartiles};

/// Full-scale temperature difference of the heatmap color ramp, K.
/// Differences beyond ±this clamp to saturated red/blue.
pub const HEATMAP_SCALE_K: f64 = 2.0;

/// Signed per-cell temperature difference (simulated − measured, the
/// measured zone value broadcast uniformly over the zone's cells). Cells
/// with no measured counterpart (walls, outside air) carry 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapArtifact {
    pub floor_id: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major differences, K.
    pub values: Vec<f64>,
}

impl HeatmapArtifact {
    pub fn from_floor(
        floor_id: &str,
        grid: &ThermalGrid,
        real_zone_temperatures: &BTreeMap<String, f64>,
    ) -> Self {
        let values = grid
            .cells()
            .iter()
            .map(|cell| match cell.kind {
                CellKind::InteriorAir { zone } => {
                    let name = &grid.zone_names()[zone];
                    cell.temperature - real_zone_temperatures[name]
                }
                _ => 0.0,
            })
            .collect();
        HeatmapArtifact {
            floor_id: floor_id.to_string(),
            rows: grid.rows(),
            cols: grid.cols(),
            values,
        }
    }

    /// Quantization rule shared by the image and any CSV re-rendering:
    /// the difference is clamped to ±`HEATMAP_SCALE_K`, scaled to ±255, and
    /// rounded half-away-from-zero. Positive (simulated warmer) drains
    /// green/blue toward red; negative drains green/red toward blue; zero
    /// stays white.
    pub fn quantize(diff: f64) -> (u8, u8, u8) {
        let unit = (diff / HEATMAP_SCALE_K).clamp(-1.0, 1.0);
        let level = (unit.abs() * 255.0).round() as u8;
        if unit >= 0.0 {
            (255, 255 - level, 255 - level)
        } else {
            (255 - level, 255 - level, 255)
        }
    }

    /// Plain-text portable pixmap (P3).
    pub fn to_ppm(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.cols, self.rows);
        for r in 0..self.rows {
            let mut row = Vec::with_capacity(self.cols);
            for c in 0..self.cols {
                let (red, green, blue) = Self::quantize(self.values[r * self.cols + c]);
                row.push(format!("{red} {green} {blue}"));
            }
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// CSV twin: the exact difference values, one grid row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| format!("{}", self.values[r * self.cols + c]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Per-step distribution summary of measured and simulated zone
/// temperatures over an evaluation window.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSeriesArtifact {
    pub rows: Vec<DriftRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub step: usize,
    pub timestamp: DateTime<Utc>,
    pub real: Quartiles,
    pub sim: Quartiles,
}

impl DriftSeriesArtifact {
    /// `real` and `sim` hold the per-step zone temperature samples.
    pub fn new(
        timestamps: &[DateTime<Utc>],
        real: &[Vec<f64>],
        sim: &[Vec<f64>],
    ) -> Self {
        assert_eq!(timestamps.len(), real.len());
        assert_eq!(timestamps.len(), sim.len());
        let rows = timestamps
            .iter()
            .zip(real.iter().zip(sim))
            .enumerate()
            .map(|(step, (&timestamp, (r, s)))| DriftRow {
                step,
                timestamp,
                real: quartiles(r),
                sim: quartiles(s),
            })
            .collect();
        DriftSeriesArtifact { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,timestamp,real_min,real_q1,real_median,real_q3,real_max,sim_min,sim_q1,sim_median,sim_q3,sim_max\n",
        );
        for row in &self.rows {
            let ts = row.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                row.step,
                ts,
                row.real.min,
                row.real.q1,
                row.real.median,
                row.real.q3,
                row.real.max,
                row.sim.min,
                row.sim.q1,
                row.sim.median,
                row.sim.q3,
                row.sim.max,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellSpec;
    use chrono::TimeZone;

    fn small_grid() -> ThermalGrid {
        let cells = vec![
            CellSpec::outside(),
            CellSpec::air(0, 295.0),
            CellSpec::outside(),
            CellSpec::air(0, 296.0),
        ];
        ThermalGrid::new(2, 2, 1.0, 3.0, cells, 10.0, 0.0, vec!["A".into()]).unwrap()
    }

    #[test]
    fn heatmap_broadcasts_zone_reading() {
        let grid = small_grid();
        let real = BTreeMap::from([("A".to_string(), 295.5)]);
        let map = HeatmapArtifact::from_floor("f1", &grid, &real);
        assert_eq!(map.values, vec![0.0, -0.5, 0.0, 0.5]);
    }

    #[test]
    fn quantization_endpoints() {
        assert_eq!(HeatmapArtifact::quantize(0.0), (255, 255, 255));
        assert_eq!(HeatmapArtifact::quantize(HEATMAP_SCALE_K), (255, 0, 0));
        assert_eq!(HeatmapArtifact::quantize(-HEATMAP_SCALE_K), (0, 0, 255));
        assert_eq!(HeatmapArtifact::quantize(10.0), (255, 0, 0)); // clamped
        assert_eq!(HeatmapArtifact::quantize(1.0), (255, 127, 127)); // 127.5 rounds away from zero
    }

    #[test]
    fn ppm_and_csv_encode_identical_values() {
        let grid = small_grid();
        let real = BTreeMap::from([("A".to_string(), 295.25)]);
        let map = HeatmapArtifact::from_floor("f1", &grid, &real);

        // re-quantizing the CSV reproduces the image exactly
        let csv = map.to_csv();
        let mut rebuilt = format!("P3\n{} {}\n255\n", map.cols, map.rows);
        for line in csv.lines() {
            let pixels: Vec<String> = line
                .split(',')
                .map(|v| {
                    let (r, g, b) = HeatmapArtifact::quantize(v.parse().unwrap());
                    format!("{r} {g} {b}")
                })
                .collect();
            rebuilt.push_str(&pixels.join(" "));
            rebuilt.push('\n');
        }
        assert_eq!(rebuilt, map.to_ppm());
    }

    #[test]
    fn drift_rows_keep_quartile_ordering() {
        let t0 = Utc.with_ymd_and_hms(2023, 7, 6, 1, 40, 0).unwrap();
        let timestamps = vec![t0, t0 + chrono::Duration::seconds(300)];
        let real = vec![vec![294.0, 295.0, 296.0], vec![294.5, 295.5, 296.5]];
        let sim = vec![vec![294.2, 295.1, 295.9], vec![294.0, 295.0, 297.0]];
        let drift = DriftSeriesArtifact::new(&timestamps, &real, &sim);
        for row in &drift.rows {
            for q in [&row.real, &row.sim] {
                assert!(q.min <= q.q1 && q.q1 <= q.median && q.median <= q.q3 && q.q3 <= q.max);
            }
        }
        let csv = drift.to_csv();
        assert!(csv.starts_with("step,timestamp,real_min"));
        assert_eq!(csv.lines().count(), 3);
    }
}
