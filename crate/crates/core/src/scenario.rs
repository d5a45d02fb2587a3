//! World configuration: grid, zones, IoT nodes, jammers and physics constants.
//!
//! Scenarios are stored as TOML with explicit units in every key. Zones may
//! be written as inclusive rectangles (`rects = [[x0, y0, x1, y1]]`) or as
//! explicit `cells`; both are expanded to boolean masks on load. Serializing
//! always emits the canonical cell-list form.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Grid coordinates `(x, y)`; `x` grows east, `y` grows north.
pub type Cell = (usize, usize);

pub const BUILTIN_NAMES: [&str; 3] = ["scenario1", "scenario2", "scenario3"];

const BUILTIN_FILES: [&str; 3] = [
    include_str!("../scenarios/scenario1.toml"),
    include_str!("../scenarios/scenario2.toml"),
    include_str!("../scenarios/scenario3.toml"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub y_cells: usize,
    /// Side length of one cell in meters.
    pub cell_len: f64,
}

impl GridSpec {
    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.y_cells && cell.1 < self.y_cells
    }

    pub fn cell_count(&self) -> usize {
        self.y_cells * self.y_cells
    }

    /// Position of a cell centre in meters.
    pub fn center_m(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.0 as f64 + 0.5) * self.cell_len,
            (cell.1 as f64 + 0.5) * self.cell_len,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    /// Blocks flight only.
    NoFly,
    /// Blocks line of sight only.
    CommObstacle,
    /// Blocks both flight and line of sight.
    Combined,
    StartLand,
}

impl ZoneKind {
    pub fn blocks_flight(self) -> bool {
        matches!(self, ZoneKind::NoFly | ZoneKind::Combined)
    }

    pub fn blocks_comm(self) -> bool {
        matches!(self, ZoneKind::CommObstacle | ZoneKind::Combined)
    }
}

/// A Y×Y boolean grid tagged with the zone kind it represents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneMask {
    pub kind: ZoneKind,
    y_cells: usize,
    cells: Vec<bool>,
}

impl ZoneMask {
    pub fn empty(kind: ZoneKind, y_cells: usize) -> Self {
        ZoneMask {
            kind,
            y_cells,
            cells: vec![false; y_cells * y_cells],
        }
    }

    pub fn from_cells(kind: ZoneKind, y_cells: usize, cells: impl IntoIterator<Item = Cell>) -> Self {
        let mut mask = Self::empty(kind, y_cells);
        for c in cells {
            mask.set(c, true);
        }
        mask
    }

    pub fn y_cells(&self) -> usize {
        self.y_cells
    }

    /// Panics if `cell` is outside the grid.
    pub fn set(&mut self, cell: Cell, value: bool) {
        assert!(cell.0 < self.y_cells && cell.1 < self.y_cells, "cell {cell:?} outside grid");
        self.cells[cell.0 * self.y_cells + cell.1] = value;
    }

    /// Out-of-grid cells are reported as not contained.
    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.y_cells && cell.1 < self.y_cells && self.cells[cell.0 * self.y_cells + cell.1]
    }

    /// Member cells in row-major `(x, y)` order.
    pub fn cells(&self) -> Vec<Cell> {
        let y = self.y_cells;
        (0..y)
            .flat_map(|cx| (0..y).map(move |cy| (cx, cy)))
            .filter(|&c| self.contains(c))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn union_with(&mut self, other: &ZoneMask) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoTNodeCfg {
    pub cell: Cell,
    /// Mb
    pub init_data: f64,
    /// Mb
    pub capacity: f64,
    /// Mb added after every communication slot.
    pub growth: f64,
    /// W
    pub tx_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JammerCfg {
    pub cell: Cell,
    /// W
    pub power_choices: Vec<f64>,
    /// Degrees; see [`JammerCfg::beam_choices_rad`].
    pub beam_choices_deg: Vec<f64>,
    pub iso_gain: f64,
}

impl JammerCfg {
    pub fn beam_choices_rad(&self) -> Vec<f64> {
        self.beam_choices_deg.iter().map(|d| d.to_radians()).collect()
    }
}

/// Rotor constants of the rotary-wing power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorParams {
    #[serde(rename = "p0_w")]
    pub p0: f64,
    #[serde(rename = "p1_w")]
    pub p1: f64,
    #[serde(rename = "u_tip_m_per_s")]
    pub u_tip: f64,
    #[serde(rename = "v0_m_per_s")]
    pub v0: f64,
    pub d0: f64,
    #[serde(rename = "rho_kg_per_m3")]
    pub rho: f64,
    pub s0: f64,
    #[serde(rename = "a_r_m2")]
    pub a_r: f64,
}

impl Default for RotorParams {
    fn default() -> Self {
        RotorParams {
            p0: 79.85,
            p1: 88.62,
            u_tip: 120.0,
            v0: 4.03,
            d0: 0.6,
            rho: 1.225,
            s0: 0.05,
            a_r: 0.503,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    #[serde(rename = "alpha_los_db_per_decade")]
    pub alpha_los: f64,
    #[serde(rename = "alpha_nlos_db_per_decade")]
    pub alpha_nlos: f64,
    #[serde(rename = "sigma2_los_db2")]
    pub sigma2_los: f64,
    #[serde(rename = "sigma2_nlos_db2")]
    pub sigma2_nlos: f64,
    #[serde(rename = "noise_psd_w_per_hz")]
    pub noise_psd: f64,
    #[serde(rename = "total_bw_hz")]
    pub total_bw: f64,
    /// Minimum collectable volume per slot, Mb.
    #[serde(rename = "rate_threshold_mb")]
    pub rate_threshold: f64,
    #[serde(rename = "altitude_m")]
    pub altitude: f64,
    #[serde(rename = "speed_m_per_s")]
    pub speed: f64,
    pub comm_slots_per_period: usize,
    #[serde(rename = "energy_budget_units")]
    pub energy_budget: f64,
    pub rotor: RotorParams,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            alpha_los: 2.27,
            alpha_nlos: 3.64,
            sigma2_los: 2.0,
            sigma2_nlos: 5.0,
            noise_psd: 1e-17,
            total_bw: 0.5e6,
            rate_threshold: 0.001,
            altitude: 30.0,
            speed: 20.0,
            comm_slots_per_period: 4,
            energy_budget: 90.0,
            rotor: RotorParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridSpec,
    pub zones: Vec<ZoneMask>,
    pub nodes: Vec<IoTNodeCfg>,
    pub jammers: Vec<JammerCfg>,
    pub physics: PhysicsParams,
}

impl ScenarioConfig {
    fn any_zone(&self, cell: Cell, pred: impl Fn(ZoneKind) -> bool) -> bool {
        self.zones.iter().any(|z| pred(z.kind) && z.contains(cell))
    }

    /// Out-of-grid cells count as flight-blocking.
    pub fn blocks_flight(&self, cell: Cell) -> bool {
        !self.grid.contains(cell) || self.any_zone(cell, ZoneKind::blocks_flight)
    }

    pub fn blocks_comm(&self, cell: Cell) -> bool {
        self.any_zone(cell, ZoneKind::blocks_comm)
    }

    pub fn is_start_land(&self, cell: Cell) -> bool {
        self.any_zone(cell, |k| k == ZoneKind::StartLand)
    }

    /// Union of every zone of the given kind.
    pub fn mask_of(&self, pred: impl Fn(ZoneKind) -> bool, kind: ZoneKind) -> ZoneMask {
        let mut out = ZoneMask::empty(kind, self.grid.y_cells);
        for z in self.zones.iter().filter(|z| pred(z.kind)) {
            out.union_with(z);
        }
        out
    }

    /// All comm-blocking cells (comm obstacles and combined zones).
    pub fn comm_mask(&self) -> ZoneMask {
        self.mask_of(ZoneKind::blocks_comm, ZoneKind::CommObstacle)
    }

    pub fn start_cells(&self) -> Vec<Cell> {
        self.mask_of(|k| k == ZoneKind::StartLand, ZoneKind::StartLand).cells()
    }

    pub fn max_capacity(&self) -> f64 {
        self.nodes.iter().map(|n| n.capacity).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.y_cells < 4 {
            return Err(Error::validation("grid.y_cells", format!("must be >= 4, got {}", g.y_cells)));
        }
        if !(g.cell_len > 0.0 && g.cell_len.is_finite()) {
            return Err(Error::validation("grid.cell_len_m", "must be > 0"));
        }
        validate_physics(&self.physics)?;

        for (i, z) in self.zones.iter().enumerate() {
            if z.y_cells() != g.y_cells {
                return Err(Error::validation(format!("zones[{i}]"), "mask size does not match grid"));
            }
        }
        let starts = self
            .zones
            .iter()
            .filter(|z| z.kind == ZoneKind::StartLand)
            .collect::<Vec<_>>();
        if starts.len() != 1 {
            return Err(Error::validation(
                "zones",
                format!("expected exactly one start_land zone, found {}", starts.len()),
            ));
        }
        if starts[0].is_empty() {
            return Err(Error::validation("zones", "start_land zone has no cells"));
        }
        if self.nodes.is_empty() {
            return Err(Error::validation("nodes", "at least one IoT node is required"));
        }

        for (i, n) in self.nodes.iter().enumerate() {
            let field = |f: &str| format!("nodes[{i}].{f}");
            if !g.contains(n.cell) {
                return Err(Error::validation(field("cell"), format!("{:?} is outside the grid", n.cell)));
            }
            if self.blocks_flight(n.cell) {
                return Err(Error::validation(
                    field("cell"),
                    format!("{:?} lies inside a no-fly or combined zone", n.cell),
                ));
            }
            if !(n.capacity > 0.0) {
                return Err(Error::validation(field("capacity_mb"), "must be > 0"));
            }
            if !(n.init_data >= 0.0 && n.init_data <= n.capacity) {
                return Err(Error::validation(field("init_data_mb"), "must lie in [0, capacity_mb]"));
            }
            if !(n.growth >= 0.0) {
                return Err(Error::validation(field("growth_mb"), "must be >= 0"));
            }
            if !(n.tx_power > 0.0) {
                return Err(Error::validation(field("tx_power_w"), "must be > 0"));
            }
        }

        for (i, j) in self.jammers.iter().enumerate() {
            let field = |f: &str| format!("jammers[{i}].{f}");
            if !g.contains(j.cell) {
                return Err(Error::validation(field("cell"), format!("{:?} is outside the grid", j.cell)));
            }
            if self.blocks_flight(j.cell) {
                return Err(Error::validation(
                    field("cell"),
                    format!("{:?} lies inside a no-fly or combined zone", j.cell),
                ));
            }
            if j.power_choices.is_empty() || j.power_choices.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::validation(field("power_choices_w"), "must be a nonempty list of positive powers"));
            }
            if j.beam_choices_deg.is_empty() || j.beam_choices_deg.iter().any(|&b| !(b > 0.0 && b < 180.0)) {
                return Err(Error::validation(
                    field("beam_choices_deg"),
                    "must be a nonempty list of beamwidths in (0, 180) degrees",
                ));
            }
            if !(j.iso_gain > 0.0) {
                return Err(Error::validation(field("iso_gain"), "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let cfg = file.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML form: explicit cell lists and per-node values.
    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile::from_config(self);
        toml::to_string(&file).expect("scenario serializes")
    }
}

fn validate_physics(p: &PhysicsParams) -> Result<()> {
    let checks: [(&str, f64); 11] = [
        ("physics.alpha_los_db_per_decade", p.alpha_los),
        ("physics.alpha_nlos_db_per_decade", p.alpha_nlos),
        ("physics.sigma2_los_db2", p.sigma2_los),
        ("physics.sigma2_nlos_db2", p.sigma2_nlos),
        ("physics.noise_psd_w_per_hz", p.noise_psd),
        ("physics.total_bw_hz", p.total_bw),
        ("physics.rate_threshold_mb", p.rate_threshold),
        ("physics.altitude_m", p.altitude),
        ("physics.speed_m_per_s", p.speed),
        ("physics.energy_budget_units", p.energy_budget),
        ("physics.rotor.p0_w", p.rotor.p0),
    ];
    let r = &p.rotor;
    let rotor: [(&str, f64); 7] = [
        ("physics.rotor.p1_w", r.p1),
        ("physics.rotor.u_tip_m_per_s", r.u_tip),
        ("physics.rotor.v0_m_per_s", r.v0),
        ("physics.rotor.d0", r.d0),
        ("physics.rotor.rho_kg_per_m3", r.rho),
        ("physics.rotor.s0", r.s0),
        ("physics.rotor.a_r_m2", r.a_r),
    ];
    for (field, v) in checks.iter().chain(rotor.iter()) {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::validation(*field, format!("must be strictly positive, got {v}")));
        }
    }
    if p.comm_slots_per_period < 1 {
        return Err(Error::validation("physics.comm_slots_per_period", "must be >= 1"));
    }
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    ScenarioConfig::from_toml_str(&text)
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let idx = BUILTIN_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    ScenarioConfig::from_toml_str(BUILTIN_FILES[idx])
}

/// Raw TOML text of a built-in scenario, for users who want a starting file.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTIN_NAMES.iter().position(|n| *n == name).map(|i| BUILTIN_FILES[i])
}

/// Resolve a `--scenario` argument: a built-in name or a path to a file.
pub fn resolve(name_or_path: &str) -> Result<ScenarioConfig> {
    if BUILTIN_NAMES.contains(&name_or_path) {
        builtin(name_or_path)
    } else if Path::new(name_or_path).exists() {
        load_scenario(name_or_path)
    } else {
        Err(Error::UnknownScenario(name_or_path.to_string()))
    }
}

/// Draw one episode's (power W, beamwidth rad) uniformly from the product set.
pub fn sample_jammer_episode<R: Rng + ?Sized>(cfg: &JammerCfg, rng: &mut R) -> (f64, f64) {
    let p = cfg.power_choices[rng.random_range(0..cfg.power_choices.len())];
    let b = cfg.beam_choices_deg[rng.random_range(0..cfg.beam_choices_deg.len())];
    (p, b.to_radians())
}

// ---- file format ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    grid: GridFile,
    physics: PhysicsParams,
    #[serde(default)]
    zones: Vec<ZoneFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_defaults: Option<NodeDefaults>,
    #[serde(default)]
    nodes: Vec<NodeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    jammer_defaults: Option<JammerDefaults>,
    #[serde(default)]
    jammers: Vec<JammerFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    y_cells: usize,
    cell_len_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneFile {
    kind: ZoneKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cells: Vec<[usize; 2]>,
    /// Inclusive rectangles `[x0, y0, x1, y1]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    rects: Vec<[usize; 4]>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDefaults {
    capacity_mb: Option<f64>,
    growth_mb: Option<f64>,
    tx_power_w: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    cell: [usize; 2],
    init_data_mb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity_mb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth_mb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tx_power_w: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JammerDefaults {
    power_choices_w: Option<Vec<f64>>,
    beam_choices_deg: Option<Vec<f64>>,
    iso_gain: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JammerFile {
    cell: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    power_choices_w: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beam_choices_deg: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iso_gain: Option<f64>,
}

fn required<T: Clone>(field: String, own: &Option<T>, default: Option<&T>) -> Result<T> {
    own.clone()
        .or_else(|| default.cloned())
        .ok_or_else(|| Error::Parse(format!("missing `{field}` (and no default given)")))
}

impl ScenarioFile {
    fn into_config(self) -> Result<ScenarioConfig> {
        let y = self.grid.y_cells;
        let in_grid = |field: String, c: [usize; 2]| -> Result<Cell> {
            if c[0] < y && c[1] < y {
                Ok((c[0], c[1]))
            } else {
                Err(Error::validation(field, format!("cell {c:?} is outside the {y}x{y} grid")))
            }
        };

        let mut zones = Vec::with_capacity(self.zones.len());
        for (i, z) in self.zones.iter().enumerate() {
            let mut mask = ZoneMask::empty(z.kind, y);
            for &c in &z.cells {
                mask.set(in_grid(format!("zones[{i}].cells"), c)?, true);
            }
            for &[x0, y0, x1, y1] in &z.rects {
                if x0 > x1 || y0 > y1 {
                    return Err(Error::validation(format!("zones[{i}].rects"), "rectangle corners out of order"));
                }
                in_grid(format!("zones[{i}].rects"), [x1, y1])?;
                for cx in x0..=x1 {
                    for cy in y0..=y1 {
                        mask.set((cx, cy), true);
                    }
                }
            }
            zones.push(mask);
        }

        let nd = self.node_defaults.unwrap_or_default();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            nodes.push(IoTNodeCfg {
                cell: in_grid(format!("nodes[{i}].cell"), n.cell)?,
                init_data: n.init_data_mb,
                capacity: required(format!("nodes[{i}].capacity_mb"), &n.capacity_mb, nd.capacity_mb.as_ref())?,
                growth: required(format!("nodes[{i}].growth_mb"), &n.growth_mb, nd.growth_mb.as_ref())?,
                tx_power: required(format!("nodes[{i}].tx_power_w"), &n.tx_power_w, nd.tx_power_w.as_ref())?,
            });
        }

        let jd = self.jammer_defaults.unwrap_or_default();
        let mut jammers = Vec::with_capacity(self.jammers.len());
        for (i, j) in self.jammers.iter().enumerate() {
            jammers.push(JammerCfg {
                cell: in_grid(format!("jammers[{i}].cell"), j.cell)?,
                power_choices: required(
                    format!("jammers[{i}].power_choices_w"),
                    &j.power_choices_w,
                    jd.power_choices_w.as_ref(),
                )?,
                beam_choices_deg: required(
                    format!("jammers[{i}].beam_choices_deg"),
                    &j.beam_choices_deg,
                    jd.beam_choices_deg.as_ref(),
                )?,
                iso_gain: j.iso_gain.or(jd.iso_gain).unwrap_or(1.0),
            });
        }

        Ok(ScenarioConfig {
            name: self.name,
            grid: GridSpec {
                y_cells: y,
                cell_len: self.grid.cell_len_m,
            },
            zones,
            nodes,
            jammers,
            physics: self.physics,
        })
    }

    fn from_config(cfg: &ScenarioConfig) -> Self {
        ScenarioFile {
            name: cfg.name.clone(),
            grid: GridFile {
                y_cells: cfg.grid.y_cells,
                cell_len_m: cfg.grid.cell_len,
            },
            physics: cfg.physics,
            zones: cfg
                .zones
                .iter()
                .map(|z| ZoneFile {
                    kind: z.kind,
                    cells: z.cells().into_iter().map(|(x, y)| [x, y]).collect(),
                    rects: Vec::new(),
                })
                .collect(),
            node_defaults: None,
            nodes: cfg
                .nodes
                .iter()
                .map(|n| NodeFile {
                    cell: [n.cell.0, n.cell.1],
                    init_data_mb: n.init_data,
                    capacity_mb: Some(n.capacity),
                    growth_mb: Some(n.growth),
                    tx_power_w: Some(n.tx_power),
                })
                .collect(),
            jammer_defaults: None,
            jammers: cfg
                .jammers
                .iter()
                .map(|j| JammerFile {
                    cell: [j.cell.0, j.cell.1],
                    power_choices_w: Some(j.power_choices.clone()),
                    beam_choices_deg: Some(j.beam_choices_deg.clone()),
                    iso_gain: Some(j.iso_gain),
                })
                .collect(),
        }
    }
}
