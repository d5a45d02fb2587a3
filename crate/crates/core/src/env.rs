//! Two-timescale data-collection environment.
//!
//! One option = one flight action followed by `M` communication slots. The
//! flight part moves the UAV (or records a collision), charges a full period
//! of energy and applies the return and not-landed penalties. Each slot
//! allocates bandwidth across nodes, collects data at the post-move position,
//! then grows every node's buffer and penalizes overflow.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, Fading, Perturbation, RealizedJammer, RobustParams, SinrInputs,
};
use crate::energy::normalized_step_cost;
use crate::scenario::{sample_jammer_episode, Cell, ScenarioConfig, ZoneMask};
use crate::{Error, Result};

/// Tolerance on `sum(fractions) == 1`.
pub const FRACTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Reward per collected Mb.
    pub eps_cen: f64,
    /// Per-node data-loss penalty.
    pub r_ls: f64,
    /// Collision penalty.
    pub r_csn: f64,
    pub eps_re: f64,
    /// Return-penalty energy threshold.
    pub e_tsd: f64,
    pub eps_ld1: f64,
    pub eps_ld2: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            eps_cen: 1.5,
            r_ls: -1.0,
            r_csn: -7.0,
            eps_re: 10.0,
            e_tsd: 10.0,
            eps_ld1: -10.0,
            eps_ld2: -100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReturnPenalty {
    /// Applied every period while energy is at or below the threshold.
    #[default]
    Recurring,
    /// Applied on the first such period only.
    Once,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvOptions {
    pub rewards: RewardParams,
    /// Episode length cap N in flight periods.
    pub max_periods: usize,
    pub return_penalty: ReturnPenalty,
    pub fading: bool,
    pub robust: Option<RobustParams>,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions {
            rewards: RewardParams::default(),
            max_periods: 200,
            return_penalty: ReturnPenalty::Recurring,
            fading: true,
            robust: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightAction {
    North,
    East,
    South,
    West,
    Hover,
    Land,
}

impl FlightAction {
    pub const COUNT: usize = 6;
    pub const ALL: [FlightAction; 6] = [
        FlightAction::North,
        FlightAction::East,
        FlightAction::South,
        FlightAction::West,
        FlightAction::Hover,
        FlightAction::Land,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Cell offset; `None` for actions that do not move.
    pub fn delta(self) -> Option<(i64, i64)> {
        match self {
            FlightAction::North => Some((0, 1)),
            FlightAction::East => Some((1, 0)),
            FlightAction::South => Some((0, -1)),
            FlightAction::West => Some((-1, 0)),
            FlightAction::Hover | FlightAction::Land => None,
        }
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; Self::COUNT];
        v[self.index()] = 1.0;
        v
    }
}

/// Per-node bandwidth fractions summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthAction {
    fractions: Vec<f64>,
}

impl BandwidthAction {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Action("bandwidth action has no entries".into()));
        }
        if fractions.iter().any(|f| !(*f >= 0.0 && *f <= 1.0)) {
            return Err(Error::Action("bandwidth fractions must lie in [0, 1]".into()));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > FRACTION_TOL {
            return Err(Error::Action(format!("bandwidth fractions sum to {sum}, not 1")));
        }
        Ok(BandwidthAction { fractions })
    }

    pub fn uniform(n: usize) -> Self {
        BandwidthAction {
            fractions: vec![1.0 / n as f64; n],
        }
    }

    /// Entire band to node `i` of `n`.
    pub fn exclusive(n: usize, i: usize) -> Self {
        let mut fractions = vec![0.0; n];
        fractions[i] = 1.0;
        BandwidthAction { fractions }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn alloc_hz(&self, total_bw: f64) -> Vec<f64> {
        self.fractions.iter().map(|f| f * total_bw).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub uav_cell: Cell,
    pub energy: f64,
    /// Remaining Mb per node.
    pub node_data: Vec<f64>,
    /// Completed flight periods.
    pub period_idx: usize,
    /// Communication slots completed in the current period.
    pub slot_idx: usize,
    pub landed: bool,
    pub crashed_out: bool,
    pub truncated: bool,
    pub return_penalized: bool,
    pub jammers: Vec<RealizedJammer>,
}

impl EnvState {
    pub fn is_terminal(&self) -> bool {
        self.landed || self.crashed_out || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlightOutcome {
    /// Sum of collision, return and not-landed penalties.
    pub reward: f64,
    pub collision: bool,
    pub moved: bool,
    pub landed: bool,
    pub return_penalty: f64,
    pub not_landed_penalty: f64,
    pub energy_cost: f64,
    /// Chebyshev cells to the nearest start/land cell after the move.
    pub d_re: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepFlags {
    pub collision: bool,
    pub low_battery: bool,
    pub data_loss: bool,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub reward: f64,
    /// Mb collected from each node.
    pub collected: Vec<f64>,
    /// Mb discarded on overflow, summed over nodes.
    pub lost: f64,
    pub loss_nodes: usize,
    pub fractions: Vec<f64>,
    pub flags: StepFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionOutcome {
    pub action: FlightAction,
    pub flight: FlightOutcome,
    pub reports: Vec<StepReport>,
    /// Flight reward plus every slot reward of the option.
    pub upper_reward: f64,
}

/// Volume (Mb) actually taken from a node in one slot.
///
/// Below the threshold nothing is collected; otherwise the transmitted
/// volume, capped by what the node holds.
pub fn collected_volume(rate_bps: f64, slot_s: f64, threshold_mb: f64, remaining_mb: f64) -> f64 {
    let volume = rate_bps * slot_s / 1e6;
    if volume < threshold_mb {
        0.0
    } else {
        volume.min(remaining_mb)
    }
}

/// Flight period duration divided evenly into slots, seconds.
pub fn comm_slot_seconds(cell_len: f64, physics: &crate::scenario::PhysicsParams) -> f64 {
    (cell_len / physics.speed) / physics.comm_slots_per_period as f64
}

/// Callbacks used by [`Env::run_option`] for the slot-level decisions.
pub trait LowerPolicy {
    fn allocate(&mut self, env: &Env, state: &EnvState) -> BandwidthAction;

    /// Called after each slot with the updated state.
    fn after_slot(&mut self, _env: &Env, _state: &EnvState, _report: &StepReport) {}
}

impl<F> LowerPolicy for F
where
    F: FnMut(&Env, &EnvState) -> BandwidthAction,
{
    fn allocate(&mut self, env: &Env, state: &EnvState) -> BandwidthAction {
        self(env, state)
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: Arc<ScenarioConfig>,
    opts: EnvOptions,
    comm_mask: ZoneMask,
    start_cells: Vec<Cell>,
    slot_s: f64,
    move_cost: f64,
    fading: Fading,
}

impl Env {
    pub fn new(cfg: Arc<ScenarioConfig>, opts: EnvOptions) -> Result<Self> {
        cfg.validate()?;
        if let Some(r) = &opts.robust {
            r.validate()?;
        }
        if opts.max_periods == 0 {
            return Err(Error::validation("env.max_periods", "must be >= 1"));
        }
        if !(opts.rewards.e_tsd > 0.0) {
            return Err(Error::validation("reward.e_tsd", "must be > 0"));
        }
        let comm_mask = cfg.comm_mask();
        let start_cells = cfg.start_cells();
        let slot_s = comm_slot_seconds(cfg.grid.cell_len, &cfg.physics);
        let move_cost = normalized_step_cost(true, cfg.physics.speed, &cfg.physics.rotor)?;
        let fading = Fading::from_flag(opts.fading);
        Ok(Env {
            cfg,
            opts,
            comm_mask,
            start_cells,
            slot_s,
            move_cost,
            fading,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn config_arc(&self) -> &Arc<ScenarioConfig> {
        &self.cfg
    }

    pub fn options(&self) -> &EnvOptions {
        &self.opts
    }

    pub fn comm_mask(&self) -> &ZoneMask {
        &self.comm_mask
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_s
    }

    pub fn node_count(&self) -> usize {
        self.cfg.nodes.len()
    }

    pub fn slots_per_period(&self) -> usize {
        self.cfg.physics.comm_slots_per_period
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let uav_cell = self.start_cells[rng.random_range(0..self.start_cells.len())];
        let jammers = self
            .cfg
            .jammers
            .iter()
            .map(|j| {
                let (power, beamwidth) = sample_jammer_episode(j, rng);
                RealizedJammer {
                    cell: j.cell,
                    power,
                    beamwidth,
                    iso_gain: j.iso_gain,
                }
            })
            .collect();
        EnvState {
            uav_cell,
            energy: self.cfg.physics.energy_budget,
            node_data: self.cfg.nodes.iter().map(|n| n.init_data).collect(),
            period_idx: 0,
            slot_idx: 0,
            landed: false,
            crashed_out: false,
            truncated: false,
            return_penalized: false,
            jammers,
        }
    }

    /// Chebyshev distance (cells) to the nearest start/land cell.
    pub fn distance_to_home(&self, cell: Cell) -> usize {
        self.start_cells
            .iter()
            .map(|&(x, y)| x.abs_diff(cell.0).max(y.abs_diff(cell.1)))
            .min()
            .unwrap_or(0)
    }

    pub fn step_flight(&self, state: &mut EnvState, action: FlightAction) -> Result<FlightOutcome> {
        if state.is_terminal() {
            return Err(Error::Terminal);
        }
        let rw = &self.opts.rewards;
        let mut out = FlightOutcome::default();

        match action.delta() {
            Some((dx, dy)) => {
                let tx = state.uav_cell.0 as i64 + dx;
                let ty = state.uav_cell.1 as i64 + dy;
                let target = (tx.max(0) as usize, ty.max(0) as usize);
                if tx < 0 || ty < 0 || self.cfg.blocks_flight(target) {
                    out.collision = true;
                    out.reward += rw.r_csn;
                } else {
                    state.uav_cell = target;
                    out.moved = true;
                }
            }
            None => {
                if action == FlightAction::Land && self.cfg.is_start_land(state.uav_cell) {
                    state.landed = true;
                    out.landed = true;
                }
            }
        }

        out.energy_cost = if out.moved { self.move_cost } else { 1.0 };
        state.energy -= out.energy_cost;
        state.period_idx += 1;
        state.slot_idx = 0;
        out.d_re = self.distance_to_home(state.uav_cell);

        let fire_return = match self.opts.return_penalty {
            ReturnPenalty::Recurring => true,
            ReturnPenalty::Once => !state.return_penalized,
        };
        if !state.landed && state.energy <= rw.e_tsd && fire_return {
            out.return_penalty = -(out.d_re as f64) * (rw.eps_re - state.energy);
            out.reward += out.return_penalty;
            state.return_penalized = true;
        }
        if state.energy <= 0.0 && !state.landed {
            out.not_landed_penalty = rw.eps_ld1 * out.d_re as f64 + rw.eps_ld2;
            out.reward += out.not_landed_penalty;
            state.crashed_out = true;
        }
        if state.period_idx >= self.opts.max_periods {
            state.truncated = true;
        }
        Ok(out)
    }

    /// Full-band, fading-free rate estimate (bit/s) for every node.
    pub fn full_band_rates(&self, state: &EnvState) -> Vec<f64> {
        let p = &self.cfg.physics;
        // fading is off, so the generator is never drawn from
        let mut no_rng = crate::seeded_rng(0, 0);
        let jam = channel::jammer_terms(
            state.uav_cell,
            &state.jammers,
            &self.cfg.grid,
            p,
            &self.comm_mask,
            Fading::Disabled,
            &mut no_rng,
        );
        self.cfg
            .nodes
            .iter()
            .map(|n| {
                let los = channel::is_los(state.uav_cell, n.cell, &self.comm_mask);
                let d = channel::link_distance(&self.cfg.grid, state.uav_cell, n.cell, p.altitude);
                let gain = channel::gain_from_loss(channel::path_loss_db(d, los, 0.0, p).expect("d > 0"));
                let s = channel::sinr(&SinrInputs {
                    tx_power: n.tx_power,
                    gain,
                    bw: p.total_bw,
                    noise_psd: p.noise_psd,
                    interference: jam.clone(),
                });
                channel::rate_bps(p.total_bw, s)
            })
            .collect()
    }

    /// Per-node rates (bit/s) for one slot under `alloc_hz`, drawing fading
    /// and robust perturbations from `rng`.
    pub fn slot_rates<R: Rng + ?Sized>(&self, state: &EnvState, alloc_hz: &[f64], rng: &mut R) -> Vec<f64> {
        let p = &self.cfg.physics;
        let jam = channel::jammer_terms(
            state.uav_cell,
            &state.jammers,
            &self.cfg.grid,
            p,
            &self.comm_mask,
            self.fading,
            rng,
        );
        let jam_pert = self
            .opts
            .robust
            .map(|r| Perturbation::sample(&r, jam.len(), rng).eps_jammers);

        self.cfg
            .nodes
            .iter()
            .zip(alloc_hz)
            .map(|(n, &bw)| {
                let los = channel::is_los(state.uav_cell, n.cell, &self.comm_mask);
                let d = channel::link_distance(&self.cfg.grid, state.uav_cell, n.cell, p.altitude);
                let shadow = channel::sample_shadow(los, p, self.fading, rng);
                let gain = channel::gain_from_loss(channel::path_loss_db(d, los, shadow, p).expect("d > 0"));
                let inputs = SinrInputs {
                    tx_power: n.tx_power,
                    gain,
                    bw,
                    noise_psd: p.noise_psd,
                    interference: jam.clone(),
                };
                let s = match (&self.opts.robust, &jam_pert) {
                    (Some(rob), Some(eps_j)) => {
                        let mut pert = Perturbation::sample(rob, 0, rng);
                        pert.eps_jammers = eps_j.clone();
                        channel::perturbed_sinr(&inputs, &pert)
                    }
                    _ => channel::sinr(&inputs),
                };
                if bw > 0.0 {
                    channel::rate_bps(bw, s)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn step_comm<R: Rng + ?Sized>(
        &self,
        state: &mut EnvState,
        action: &BandwidthAction,
        rng: &mut R,
    ) -> Result<StepReport> {
        let m = self.slots_per_period();
        if state.slot_idx >= m {
            return Err(Error::Action(format!("all {m} slots of this period are used")));
        }
        if action.fractions().len() != self.node_count() {
            return Err(Error::Dimension {
                expected: self.node_count(),
                got: action.fractions().len(),
            });
        }
        let sum: f64 = action.fractions().iter().sum();
        if (sum - 1.0).abs() > FRACTION_TOL {
            return Err(Error::Action(format!("bandwidth fractions sum to {sum}, not 1")));
        }
        let p = &self.cfg.physics;
        let rw = &self.opts.rewards;
        let alloc = action.alloc_hz(p.total_bw);
        let rates = self.slot_rates(state, &alloc, rng);

        let mut collected = Vec::with_capacity(rates.len());
        let mut lost = 0.0;
        let mut loss_nodes = 0;
        let mut reward = 0.0;
        for (i, node) in self.cfg.nodes.iter().enumerate() {
            let c = collected_volume(rates[i], self.slot_s, p.rate_threshold, state.node_data[i]);
            state.node_data[i] -= c;
            state.node_data[i] += node.growth;
            if state.node_data[i] > node.capacity {
                lost += state.node_data[i] - node.capacity;
                state.node_data[i] = node.capacity;
                loss_nodes += 1;
                reward += rw.r_ls;
            }
            collected.push(c);
        }
        reward += rw.eps_cen * collected.iter().sum::<f64>();
        state.slot_idx += 1;

        Ok(StepReport {
            reward,
            collected,
            lost,
            loss_nodes,
            fractions: action.fractions().to_vec(),
            flags: StepFlags {
                collision: false,
                low_battery: state.energy <= rw.e_tsd,
                data_loss: loss_nodes > 0,
                terminal: state.is_terminal() && state.slot_idx == m,
            },
        })
    }

    /// One option: the flight action, then exactly `M` slots.
    pub fn run_option<R: Rng + ?Sized, P: LowerPolicy + ?Sized>(
        &self,
        state: &mut EnvState,
        option: FlightAction,
        lower: &mut P,
        rng: &mut R,
    ) -> Result<OptionOutcome> {
        let flight = self.step_flight(state, option)?;
        let mut reports = Vec::with_capacity(self.slots_per_period());
        let mut upper_reward = flight.reward;
        for _ in 0..self.slots_per_period() {
            let action = lower.allocate(self, state);
            let mut report = self.step_comm(state, &action, rng)?;
            report.flags.collision = flight.collision;
            upper_reward += report.reward;
            lower.after_slot(self, state, &report);
            reports.push(report);
        }
        Ok(OptionOutcome {
            action: option,
            flight,
            reports,
            upper_reward,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub total_collected: f64,
    pub total_lost: f64,
    pub collisions: usize,
    pub landed: bool,
    pub reward: f64,
    pub periods: usize,
}

pub fn episode_metrics(history: &[OptionOutcome]) -> EpisodeMetrics {
    let mut m = EpisodeMetrics::default();
    for o in history {
        m.reward += o.upper_reward;
        m.collisions += usize::from(o.flight.collision);
        m.landed |= o.flight.landed;
        m.periods += 1;
        for r in &o.reports {
            m.total_collected += r.collected.iter().sum::<f64>();
            m.total_lost += r.lost;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin, ScenarioConfig, ZoneKind};
    use crate::seeded_rng;

    fn env1(fading: bool) -> Env {
        let cfg = Arc::new(builtin("scenario1").unwrap());
        Env::new(cfg, EnvOptions { fading, ..Default::default() }).unwrap()
    }

    fn at(env: &Env, cell: Cell, energy: f64) -> EnvState {
        let mut s = env.reset(&mut seeded_rng(0, 0));
        s.uav_cell = cell;
        s.energy = energy;
        s
    }

    #[test]
    fn reset_contract() {
        let env = env1(true);
        let s = env.reset(&mut seeded_rng(5, 0));
        assert_eq!(s.energy, 90.0);
        assert_eq!(s.node_data, vec![50.0, 50.0, 10.0, 10.0, 50.0, 50.0, 10.0]);
        assert!(env.config().is_start_land(s.uav_cell));
        assert_eq!(s, env.reset(&mut seeded_rng(5, 0)));
    }

    #[test]
    fn collision_into_no_fly() {
        let env = env1(false);
        // (11,10)..(13,12) is no-fly in scenario1
        let mut s = at(&env, (10, 11), 50.0);
        let out = env.step_flight(&mut s, FlightAction::East).unwrap();
        assert!(out.collision);
        assert_eq!(out.reward, -7.0);
        assert_eq!(s.uav_cell, (10, 11));
        assert_eq!(s.energy, 49.0);
    }

    #[test]
    fn collision_at_grid_edge() {
        let env = env1(false);
        let mut s = at(&env, (0, 0), 50.0);
        assert!(env.step_flight(&mut s, FlightAction::West).unwrap().collision);
        assert!(env.step_flight(&mut s, FlightAction::South).unwrap().collision);
        let mut s = at(&env, (15, 15), 50.0);
        assert!(env.step_flight(&mut s, FlightAction::North).unwrap().collision);
        assert!(env.step_flight(&mut s, FlightAction::East).unwrap().collision);
        assert_eq!(s.uav_cell, (15, 15));
    }

    #[test]
    fn hover_costs_one_unit() {
        let env = env1(false);
        let mut s = at(&env, (8, 8), 50.0);
        let out = env.step_flight(&mut s, FlightAction::Hover).unwrap();
        assert_eq!(s.energy, 49.0);
        assert_eq!(out.reward, 0.0);
        let out = env.step_flight(&mut s, FlightAction::North).unwrap();
        assert!(out.moved && (out.energy_cost - 1.0582).abs() < 1e-3);
    }

    #[test]
    fn return_penalty_example() {
        let env = env1(false);
        // start zone is (1..=2, 13..=14); (5,14) is 3 cells away. Hover from
        // energy 6 leaves 5.
        let mut s = at(&env, (5, 14), 6.0);
        let out = env.step_flight(&mut s, FlightAction::Hover).unwrap();
        assert_eq!(out.d_re, 3);
        assert_eq!(s.energy, 5.0);
        assert_eq!(out.return_penalty, -15.0);
        assert_eq!(out.reward, -15.0);
    }

    #[test]
    fn return_penalty_once_mode() {
        let cfg = Arc::new(builtin("scenario1").unwrap());
        let opts = EnvOptions { return_penalty: ReturnPenalty::Once, fading: false, ..Default::default() };
        let env = Env::new(cfg, opts).unwrap();
        let mut s = at(&env, (5, 14), 8.0);
        assert!(env.step_flight(&mut s, FlightAction::Hover).unwrap().return_penalty < 0.0);
        assert_eq!(env.step_flight(&mut s, FlightAction::Hover).unwrap().return_penalty, 0.0);
    }

    #[test]
    fn crash_when_energy_runs_out() {
        let env = env1(false);
        let mut s = at(&env, (5, 14), 0.5);
        let out = env.step_flight(&mut s, FlightAction::Hover).unwrap();
        assert!(s.crashed_out && s.is_terminal());
        assert_eq!(out.not_landed_penalty, -10.0 * 3.0 - 100.0);
        assert!(matches!(env.step_flight(&mut s, FlightAction::Hover), Err(Error::Terminal)));
    }

    #[test]
    fn landing_only_in_start_zone() {
        let env = env1(false);
        let mut s = at(&env, (5, 14), 40.0);
        let out = env.step_flight(&mut s, FlightAction::Land).unwrap();
        assert!(!out.landed && !s.is_terminal());
        let mut s = at(&env, (1, 13), 40.0);
        let out = env.step_flight(&mut s, FlightAction::Land).unwrap();
        assert!(out.landed && s.landed && s.is_terminal());
        assert_eq!(s.energy, 39.0);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn collection_clamp_branches() {
        // 0.0005 Mb in one slot is below the 0.001 Mb threshold
        assert_eq!(collected_volume(2000.0, 0.25, 0.001, 5.0), 0.0);
        assert_eq!(collected_volume(8e6, 0.25, 0.001, 1.0), 1.0);
        assert_eq!(collected_volume(2e6, 0.25, 0.001, 1.0), 0.5);
    }

    #[test]
    fn overflow_loses_growth_and_penalizes() {
        let env = env1(false);
        let mut s = at(&env, (1, 13), 50.0);
        s.node_data = vec![65.0; 7];
        let before = s.node_data.clone();
        // all bandwidth to node 0: others collect nothing and overflow
        let r = env.step_comm(&mut s, &BandwidthAction::exclusive(7, 0), &mut seeded_rng(1, 0)).unwrap();
        assert_eq!(r.loss_nodes, 6);
        assert!((r.lost - 6.0 * 0.2).abs() < 1e-9);
        assert!(r.collected[0] > 0.2);
        let expected = 1.5 * r.collected[0] - 6.0;
        assert!((r.reward - expected).abs() < 1e-9);
        for i in 0..7 {
            let lost_i = before[i] - r.collected[i] + 0.2 - s.node_data[i];
            assert!(lost_i >= -1e-12);
        }
    }

    #[test]
    fn comm_rejects_bad_fractions() {
        let env = env1(false);
        let mut s = at(&env, (1, 13), 50.0);
        assert!(BandwidthAction::new(vec![0.5, 0.6]).is_err());
        let bad = BandwidthAction { fractions: vec![0.2; 7] };
        assert!(env.step_comm(&mut s, &bad, &mut seeded_rng(1, 0)).is_err());
        let short = BandwidthAction::uniform(3);
        assert!(env.step_comm(&mut s, &short, &mut seeded_rng(1, 0)).is_err());
    }

    #[test]
    fn run_option_structure() {
        let env = env1(true);
        let mut rng = seeded_rng(3, 0);
        let mut s = env.reset(&mut rng);
        let mut seen = Vec::new();
        let mut policy = |env: &Env, _s: &EnvState| {
            let a = BandwidthAction::uniform(env.node_count());
            seen.push(a.alloc_hz(env.config().physics.total_bw));
            a
        };
        let out = env.run_option(&mut s, FlightAction::Hover, &mut policy, &mut rng).unwrap();
        assert_eq!(out.reports.len(), 4);
        for alloc in &seen {
            for b in alloc {
                assert!((b - 0.5e6 / 7.0).abs() < 1e-6);
            }
        }
        let recomputed = out.flight.reward + out.reports.iter().map(|r| r.reward).sum::<f64>();
        assert!((out.upper_reward - recomputed).abs() < 1e-12);
    }

    #[test]
    fn comm_slot_duration() {
        let mut p = crate::scenario::PhysicsParams::default();
        assert_eq!(comm_slot_seconds(20.0, &p), 0.25);
        p.comm_slots_per_period = 1;
        assert_eq!(comm_slot_seconds(20.0, &p), 1.0);
        p.comm_slots_per_period = 4;
        p.speed = 40.0;
        assert_eq!(comm_slot_seconds(20.0, &p), 0.125);
    }

    #[test]
    fn metrics_sums() {
        assert_eq!(episode_metrics(&[]), EpisodeMetrics::default());
        let report = |c: f64, lost: f64, reward: f64| StepReport {
            reward,
            collected: vec![c, 2.0 * c],
            lost,
            loss_nodes: usize::from(lost > 0.0),
            fractions: vec![0.5, 0.5],
            flags: StepFlags::default(),
        };
        let a = OptionOutcome {
            action: FlightAction::East,
            flight: FlightOutcome { collision: true, reward: -7.0, ..Default::default() },
            reports: vec![report(1.0, 0.0, 4.5)],
            upper_reward: -2.5,
        };
        let b = OptionOutcome {
            action: FlightAction::Land,
            flight: FlightOutcome { landed: true, ..Default::default() },
            reports: vec![report(0.5, 0.2, 1.25)],
            upper_reward: 1.25,
        };
        let m = episode_metrics(&[a, b]);
        assert_eq!(m.total_collected, 4.5);
        assert_eq!(m.total_lost, 0.2);
        assert_eq!(m.collisions, 1);
        assert!(m.landed);
        assert_eq!(m.reward, -1.25);
        assert_eq!(m.periods, 2);
    }

    #[test]
    fn nodes_in_comm_obstacle_lose_los() {
        let mut cfg: ScenarioConfig = builtin("scenario1").unwrap();
        let node = cfg.nodes[0].cell;
        let y = cfg.grid.y_cells;
        cfg.zones.push(ZoneMask::from_cells(ZoneKind::CommObstacle, y, [node]));
        let env = Env::new(Arc::new(cfg), EnvOptions { fading: false, ..Default::default() }).unwrap();
        assert!(!channel::is_los((0, 0), node, env.comm_mask()));
    }

    #[test]
    fn random_episodes_respect_invariants() {
        let env = env1(true);
        for seed in 0..8u64 {
            let mut rng = seeded_rng(seed, 0);
            let mut s = env.reset(&mut rng);
            let mut history = Vec::new();
            let total_init: f64 = s.node_data.iter().sum();
            let mut slots = 0usize;
            while !s.is_terminal() {
                let a = FlightAction::from_index(rng.random_range(0..5)).unwrap();
                let before_cell = s.uav_cell;
                let before_energy = s.energy;
                let mut alloc = |env: &Env, _s: &EnvState| {
                    let raw: Vec<f64> = (0..env.node_count()).map(|i| (i + 1) as f64).collect();
                    let sum: f64 = raw.iter().sum();
                    BandwidthAction::new(raw.into_iter().map(|x| x / sum).collect()).unwrap()
                };
                let before_data = s.node_data.clone();
                let out = env.run_option(&mut s, a, &mut alloc, &mut rng).unwrap();
                assert!(s.energy < before_energy);
                let moved = before_cell.0.abs_diff(s.uav_cell.0) + before_cell.1.abs_diff(s.uav_cell.1);
                assert!(moved <= 1);
                if out.flight.collision {
                    assert_eq!(before_cell, s.uav_cell);
                }
                // per-period data conservation
                let mut expect = before_data;
                for r in &out.reports {
                    for (i, e) in expect.iter_mut().enumerate() {
                        *e = *e - r.collected[i] + 0.2;
                    }
                }
                let lost: f64 = out.reports.iter().map(|r| r.lost).sum();
                let diff = expect.iter().sum::<f64>() - lost - s.node_data.iter().sum::<f64>();
                assert!(diff.abs() < 1e-9, "{diff}");
                for (d, n) in s.node_data.iter().zip(&env.config().nodes) {
                    assert!(*d >= 0.0 && *d <= n.capacity);
                }
                slots += out.reports.len();
                history.push(out);
            }
            let m = episode_metrics(&history);
            let bound = total_init + slots as f64 * 0.2 * 7.0;
            assert!(m.total_collected <= bound + 1e-9);
        }
    }
}
