//! Finite-differences thermal core.
//!
//! Each floor is a 2D lattice of control volumes bounded horizontally by
//! `dx²` and vertically by the floor height. A step applies the energy
//! balance `Q_ext + Q_1 + Q_2 + Q_3 + Q_4 = M·c·ΔT/Δt` to every
//! non-boundary cell: Fourier conduction across interior faces, forced
//! convection across faces exposed to outside air, and external HVAC power
//! on diffuser cells. The explicit update is subdivided into uniform
//! substeps so that every cell satisfies the discrete stability bound
//! (Fourier number ≤ 0.25 for the most diffusive uniform material, and the
//! equivalent per-cell rate cap where face conductances are heterogeneous).
//! Intra-zone convective mixing is approximated by a randomized temperature
//! shuffle after the diffusion update.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

/// Specific heat capacity of air, J/(kg·K). Shared with the HVAC model.
pub const AIR_HEAT_CAPACITY: f64 = 1006.0;

/// Interior air is not a tuned parameter; it is fixed at textbook constants.
pub const AIR_MATERIAL: Material = Material {
    conductivity: 0.026,
    density: 1.2,
    heat_capacity: AIR_HEAT_CAPACITY,
};

/// Per-substep cap on `δt · Σ_f G_f/(M·c)` for every cell. A cell whose four
/// faces carry the same conductivity hits this cap exactly at Fourier number
/// 0.25, and any value ≤ 1 keeps each substep a convex combination of the
/// cell and its neighbors (discrete maximum principle).
const RATE_CAP: f64 = 1.0;

/// Sentinel neighbor slot for adiabatic (missing) faces.
const NO_FACE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    /// A temperature became NaN or infinite during a step. Calibration
    /// treats the candidate parameter vector as failed.
    #[error("non-finite temperature at cell ({row}, {col}) after step")]
    NonFiniteTemperature { row: usize, col: usize },
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("unknown zone `{0}`")]
    UnknownZone(String),
}

/// Thermal material of a control volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Thermal conductivity k, W/(m·K).
    pub conductivity: f64,
    /// Density ρ, kg/m³.
    pub density: f64,
    /// Specific heat capacity c, J/(kg·K).
    pub heat_capacity: f64,
}

impl Material {
    /// Thermal diffusivity α = k/(ρ·c), m²/s.
    pub fn diffusivity(&self) -> f64 {
        self.conductivity / (self.density * self.heat_capacity)
    }

    fn validate(&self) -> Result<(), GridError> {
        for (name, v) in [
            ("conductivity", self.conductivity),
            ("density", self.density),
            ("heat_capacity", self.heat_capacity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GridError::Invalid(format!(
                    "material {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// What a control volume is made of, and for interior air, which zone it
/// belongs to (index into the grid's zone table).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Dirichlet boundary pinned to ambient; never receives an update.
    OutsideAir,
    ExteriorWall,
    InteriorWall,
    InteriorAir { zone: usize },
}

impl CellKind {
    pub fn is_boundary(&self) -> bool {
        matches!(self, CellKind::OutsideAir)
    }

    pub fn is_air(&self) -> bool {
        matches!(self, CellKind::InteriorAir { .. })
    }
}

/// One discrete control volume of the FD lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVolume {
    pub kind: CellKind,
    /// Temperature, K.
    pub temperature: f64,
    pub material: Material,
    /// Mass, kg; derived as ρ·dx²·floor_height (zero for boundary cells).
    pub mass: f64,
    /// Whether a VAV diffuser injects external power into this cell.
    pub has_diffuser: bool,
}

/// Cell description used to build a grid; mass is derived during
/// construction.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub kind: CellKind,
    pub temperature: f64,
    pub material: Material,
    pub has_diffuser: bool,
}

impl CellSpec {
    pub fn wall(kind: CellKind, material: Material, temperature: f64) -> Self {
        CellSpec {
            kind,
            temperature,
            material,
            has_diffuser: false,
        }
    }

    pub fn air(zone: usize, temperature: f64) -> Self {
        CellSpec {
            kind: CellKind::InteriorAir { zone },
            temperature,
            material: AIR_MATERIAL,
            has_diffuser: false,
        }
    }

    pub fn outside() -> Self {
        CellSpec {
            kind: CellKind::OutsideAir,
            temperature: 0.0,
            material: AIR_MATERIAL,
            has_diffuser: false,
        }
    }
}

/// Energy bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Σ M·c·T over non-boundary cells after the step, J.
    pub total_internal_energy: f64,
    /// Net energy that crossed convection faces into the grid, J.
    pub boundary_energy_exchanged: f64,
    /// Σ Q_ext·dt over diffuser cells, J.
    pub external_energy_injected: f64,
    /// Number of uniform substeps the step was subdivided into.
    pub substeps_used: usize,
}

/// Fourier conduction across one interior face. Positive means heat flows
/// into the cell whose temperature is `t_self`.
pub fn conduction_flux(
    t_self: f64,
    t_neighbor: f64,
    k_interface: f64,
    face_area: f64,
    dx: f64,
) -> f64 {
    k_interface * face_area * (t_neighbor - t_self) / dx
}

/// Forced convection across a face exposed to outside air. Positive means
/// heat flows into the surface cell.
pub fn convection_flux(t_surface: f64, t_ambient: f64, h: f64, face_area: f64) -> f64 {
    h * face_area * (t_ambient - t_surface)
}

/// Interface conductivity between dissimilar materials: harmonic mean of
/// the two cells' conductivities.
pub fn interface_conductivity(k_a: f64, k_b: f64) -> f64 {
    2.0 * k_a * k_b / (k_a + k_b)
}

/// Precomputed explicit-update stencil. Face rates are `G/(M·c)` per second
/// where `G` is the face conductance (k_if·A/dx for conduction, h·A for
/// convection); they are fixed once materials are fixed, so the stability
/// substep count is fixed per grid.
#[derive(Debug, Clone)]
struct Stencil {
    neighbor: Vec<[u32; 4]>,
    rate: Vec<[f64; 4]>,
    /// 1/(M·c); zero for boundary cells so they never update.
    inv_heat_capacity: Vec<f64>,
    /// max over cells of Σ_f rate_f, 1/s.
    max_rate: f64,
    /// Convection faces as (cell, G) for boundary energy bookkeeping.
    boundary_faces: Vec<(u32, f64)>,
}

/// Per-floor 2D lattice of control volumes; the FD state.
#[derive(Debug, Clone)]
pub struct ThermalGrid {
    rows: usize,
    cols: usize,
    dx: f64,
    floor_height: f64,
    cells: Vec<ControlVolume>,
    ambient_convection_coefficient: f64,
    shuffle_probability: f64,
    zone_names: Vec<String>,
    zone_cells: Vec<Vec<usize>>,
    stencil: Stencil,
    // Scratch buffers reused across steps.
    temp_a: Vec<f64>,
    temp_b: Vec<f64>,
    power: Vec<f64>,
}

impl ThermalGrid {
    /// Build and validate a grid. `zone_names` maps the zone indices used in
    /// `CellKind::InteriorAir` to their canonical names; every zone must be
    /// non-empty and 4-connected.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rows: usize,
        cols: usize,
        dx: f64,
        floor_height: f64,
        cells: Vec<CellSpec>,
        ambient_convection_coefficient: f64,
        shuffle_probability: f64,
        zone_names: Vec<String>,
    ) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(GridError::Invalid(format!(
                "cell count {} does not match {rows}x{cols}",
                cells.len()
            )));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(GridError::Invalid(format!("dx must be positive, got {dx}")));
        }
        if !(floor_height.is_finite() && floor_height > 0.0) {
            return Err(GridError::Invalid(format!(
                "floor height must be positive, got {floor_height}"
            )));
        }
        if !(ambient_convection_coefficient.is_finite() && ambient_convection_coefficient > 0.0) {
            return Err(GridError::Invalid(format!(
                "convection coefficient must be positive, got {ambient_convection_coefficient}"
            )));
        }
        if !(0.0..=1.0).contains(&shuffle_probability) {
            return Err(GridError::Invalid(format!(
                "shuffle probability must lie in [0, 1], got {shuffle_probability}"
            )));
        }

        let mut zone_cells: Vec<Vec<usize>> = vec![Vec::new(); zone_names.len()];
        let mut built = Vec::with_capacity(cells.len());
        for (i, spec) in cells.iter().enumerate() {
            if !spec.temperature.is_finite() {
                return Err(GridError::Invalid(format!(
                    "non-finite initial temperature at cell {i}"
                )));
            }
            let mass = match spec.kind {
                CellKind::OutsideAir => 0.0,
                _ => {
                    spec.material.validate()?;
                    spec.material.density * dx * dx * floor_height
                }
            };
            match spec.kind {
                CellKind::InteriorAir { zone } => {
                    if zone >= zone_names.len() {
                        return Err(GridError::Invalid(format!(
                            "cell {i} references zone index {zone} but only {} zones are declared",
                            zone_names.len()
                        )));
                    }
                    zone_cells[zone].push(i);
                }
                _ if spec.has_diffuser => {
                    return Err(GridError::Invalid(format!(
                        "cell {i} has a diffuser but is not interior air"
                    )));
                }
                _ => {}
            }
            built.push(ControlVolume {
                kind: spec.kind,
                temperature: spec.temperature,
                material: spec.material,
                mass,
                has_diffuser: spec.has_diffuser,
            });
        }
        for (zi, cells_of_zone) in zone_cells.iter().enumerate() {
            if cells_of_zone.is_empty() {
                return Err(GridError::Invalid(format!(
                    "zone `{}` has no air cells",
                    zone_names[zi]
                )));
            }
        }
        check_zone_connectivity(rows, cols, &built, &zone_names)?;

        let stencil = build_stencil(
            rows,
            cols,
            dx,
            floor_height,
            &built,
            ambient_convection_coefficient,
        );
        let n = built.len();
        Ok(ThermalGrid {
            rows,
            cols,
            dx,
            floor_height,
            cells: built,
            ambient_convection_coefficient,
            shuffle_probability,
            zone_names,
            zone_cells,
            stencil,
            temp_a: vec![0.0; n],
            temp_b: vec![0.0; n],
            power: vec![0.0; n],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn floor_height(&self) -> f64 {
        self.floor_height
    }

    pub fn shuffle_probability(&self) -> f64 {
        self.shuffle_probability
    }

    pub fn ambient_convection_coefficient(&self) -> f64 {
        self.ambient_convection_coefficient
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn cells(&self) -> &[ControlVolume] {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> &ControlVolume {
        &self.cells[self.index(row, col)]
    }

    pub fn set_temperature(&mut self, index: usize, temperature: f64) {
        self.cells[index].temperature = temperature;
    }

    pub fn set_diffuser(&mut self, index: usize) -> Result<(), GridError> {
        if !self.cells[index].kind.is_air() {
            let (row, col) = self.position(index);
            return Err(GridError::Invalid(format!(
                "diffuser at ({row}, {col}) is not on an interior air cell"
            )));
        }
        self.cells[index].has_diffuser = true;
        Ok(())
    }

    pub fn zone_names(&self) -> &[String] {
        &self.zone_names
    }

    pub fn zone_index(&self, name: &str) -> Option<usize> {
        self.zone_names.iter().position(|z| z == name)
    }

    /// Row-major cell indices of one zone's air cells.
    pub fn zone_cells(&self, zone: usize) -> &[usize] {
        &self.zone_cells[zone]
    }

    /// Number of substeps one `dt`-second step will be subdivided into.
    pub fn substeps_for(&self, dt: f64) -> usize {
        ((dt * self.stencil.max_rate) / RATE_CAP).ceil().max(1.0) as usize
    }

    /// Mean temperature over the zone's air control volumes.
    ///
    /// Accumulation is anchor-shifted and runs over sorted deviations, so
    /// the result depends only on the multiset of temperatures, not on cell
    /// order; shuffling air never changes a zone mean.
    pub fn zone_mean(&self, zone_name: &str) -> Result<f64, GridError> {
        let zi = self
            .zone_index(zone_name)
            .ok_or_else(|| GridError::UnknownZone(zone_name.to_string()))?;
        Ok(self.zone_mean_by_index(zi))
    }

    pub fn zone_mean_by_index(&self, zone: usize) -> f64 {
        let cells = &self.zone_cells[zone];
        let anchor = self.cells[cells[0]].temperature;
        let mut deviations: Vec<f64> = cells
            .iter()
            .map(|&i| self.cells[i].temperature - anchor)
            .collect();
        deviations.sort_by(f64::total_cmp);
        anchor + crate::stats::neumaier_sum(&deviations) / cells.len() as f64
    }

    /// Advance the grid by `dt` seconds. `external_power` holds (cell index,
    /// W) pairs and may only target diffuser cells; boundary cells are
    /// pinned at `ambient_t` for the whole step.
    pub fn step(
        &mut self,
        dt: f64,
        external_power: &[(usize, f64)],
        ambient_t: f64,
    ) -> Result<StepDiagnostics, GridError> {
        assert!(dt > 0.0 && dt.is_finite(), "step interval must be positive");
        let n = self.cells.len();
        let substeps = self.substeps_for(dt);
        let dt_sub = dt / substeps as f64;

        self.power.iter_mut().for_each(|q| *q = 0.0);
        let mut external_energy = 0.0;
        for &(idx, watts) in external_power {
            debug_assert!(
                self.cells[idx].has_diffuser,
                "external power targets non-diffuser cell {idx}"
            );
            self.power[idx] += watts;
            external_energy += watts * dt;
        }

        for (i, cell) in self.cells.iter().enumerate() {
            self.temp_a[i] = if cell.kind.is_boundary() {
                ambient_t
            } else {
                cell.temperature
            };
        }

        let mut boundary_energy = 0.0;
        let stencil = &self.stencil;
        let src = &mut self.temp_a;
        let dst = &mut self.temp_b;
        for _ in 0..substeps {
            for (cell, g) in &stencil.boundary_faces {
                boundary_energy += g * (ambient_t - src[*cell as usize]) * dt_sub;
            }
            for i in 0..n {
                let t = src[i];
                let nb = &stencil.neighbor[i];
                let rate = &stencil.rate[i];
                let mut acc = self.power[i] * stencil.inv_heat_capacity[i];
                for f in 0..4 {
                    if nb[f] != NO_FACE {
                        acc += rate[f] * (src[nb[f] as usize] - t);
                    }
                }
                dst[i] = t + dt_sub * acc;
            }
            std::mem::swap(src, dst);
        }

        let mut non_finite = None;
        for (i, cell) in self.cells.iter_mut().enumerate() {
            let t = if cell.kind.is_boundary() {
                ambient_t
            } else {
                src[i]
            };
            if !t.is_finite() && non_finite.is_none() {
                non_finite = Some(i);
            }
            cell.temperature = t;
        }
        if let Some(i) = non_finite {
            let (row, col) = self.position(i);
            return Err(GridError::NonFiniteTemperature { row, col });
        }

        Ok(StepDiagnostics {
            total_internal_energy: self.total_internal_energy(),
            boundary_energy_exchanged: boundary_energy,
            external_energy_injected: external_energy,
            substeps_used: substeps,
        })
    }

    /// Σ M·c·T over non-boundary cells, compensated accumulation.
    pub fn total_internal_energy(&self) -> f64 {
        let terms: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| !c.kind.is_boundary())
            .map(|c| c.mass * c.material.heat_capacity * c.temperature)
            .collect();
        crate::stats::neumaier_sum(&terms)
    }

    /// Randomized intra-zone air mixing: within each zone independently,
    /// every air cell is selected with the shuffle probability and the
    /// selected cells' temperatures undergo a uniform random permutation
    /// among themselves. Zones are visited in index order and cells in
    /// row-major order, so the rng stream is consumed deterministically.
    pub fn shuffle_air<R: Rng>(&mut self, rng: &mut R) {
        let p = self.shuffle_probability;
        for zone in 0..self.zone_cells.len() {
            let selected: Vec<usize> = self.zone_cells[zone]
                .iter()
                .copied()
                .filter(|_| rng.random_bool(p))
                .collect();
            if selected.len() < 2 {
                continue;
            }
            let mut temps: Vec<f64> = selected.iter().map(|&i| self.cells[i].temperature).collect();
            temps.shuffle(rng);
            for (&i, &t) in selected.iter().zip(temps.iter()) {
                self.cells[i].temperature = t;
            }
        }
    }
}

fn build_stencil(
    rows: usize,
    cols: usize,
    cells_dx: f64,
    floor_height: f64,
    cells: &[ControlVolume],
    h: f64,
) -> Stencil {
    let n = cells.len();
    let face_area = cells_dx * floor_height;
    let mut neighbor = vec![[NO_FACE; 4]; n];
    let mut rate = vec![[0.0; 4]; n];
    let mut inv_heat_capacity = vec![0.0; n];
    let mut boundary_faces = Vec::new();
    let mut max_rate: f64 = 0.0;

    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if cells[i].kind.is_boundary() {
                continue;
            }
            let heat_capacity = cells[i].mass * cells[i].material.heat_capacity;
            inv_heat_capacity[i] = 1.0 / heat_capacity;
            let neighbors = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            let mut total_rate = 0.0;
            for (f, &(nr, nc)) in neighbors.iter().enumerate() {
                if nr >= rows || nc >= cols {
                    continue; // grid edge: adiabatic closure
                }
                let j = nr * cols + nc;
                let conductance = if cells[j].kind.is_boundary() {
                    let g = h * face_area;
                    boundary_faces.push((i as u32, g));
                    g
                } else {
                    let k_if = interface_conductivity(
                        cells[i].material.conductivity,
                        cells[j].material.conductivity,
                    );
                    k_if * face_area / cells_dx
                };
                neighbor[i][f] = j as u32;
                rate[i][f] = conductance / heat_capacity;
                total_rate += rate[i][f];
            }
            max_rate = max_rate.max(total_rate);
        }
    }

    Stencil {
        neighbor,
        rate,
        inv_heat_capacity,
        max_rate,
        boundary_faces,
    }
}

fn check_zone_connectivity(
    rows: usize,
    cols: usize,
    cells: &[ControlVolume],
    zone_names: &[String],
) -> Result<(), GridError> {
    let mut visited = vec![false; cells.len()];
    let mut seen_component = vec![false; zone_names.len()];
    for start in 0..cells.len() {
        let CellKind::InteriorAir { zone } = cells[start].kind else {
            continue;
        };
        if visited[start] {
            continue;
        }
        if seen_component[zone] {
            return Err(GridError::Invalid(format!(
                "zone `{}` is not 4-connected",
                zone_names[zone]
            )));
        }
        seen_component[zone] = true;
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = (i / cols, i % cols);
            for (nr, nc) in [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ] {
                if nr >= rows || nc >= cols {
                    continue;
                }
                let j = nr * cols + nc;
                if !visited[j] && cells[j].kind == (CellKind::InteriorAir { zone }) {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    Ok(())
}
