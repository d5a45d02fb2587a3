//! Episode loop for the three agent kinds, replay bookkeeping and
//! checkpoints.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::ddpg::{self, ActionCoding, DdpgPair, LevelParams, PairSnapshot};
use super::replay::{ReplayBuffer, Transition};
use crate::env::{episode_metrics, BandwidthAction, Env, EpisodeMetrics, FlightAction, OptionOutcome};
use crate::observation::{FeatureParams, Observer};
use crate::scenario::{Cell, ScenarioConfig};
use crate::{Error, Result, SimRng};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Two-level: flight options above, per-slot allocation below.
    Tbh,
    /// One network emitting flight scores and allocation logits.
    Tbjn,
    /// Learned flight, whole band to the best node every slot.
    Tdma,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Tbh, AgentKind::Tbjn, AgentKind::Tdma];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Tbh => "tbh",
            AgentKind::Tbjn => "tbjn",
            AgentKind::Tdma => "tdma",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tbh" | "tbh_ddpg" | "tbh-ddpg" => Ok(AgentKind::Tbh),
            "tbjn" | "tbjn_ddpg" | "tbjn-ddpg" => Ok(AgentKind::Tbjn),
            "tdma" | "tdma_ddpg" | "tdma-ddpg" => Ok(AgentKind::Tdma),
            _ => Err(Error::Config(format!("unknown agent '{s}' (expected tbh, tbjn or tdma)"))),
        }
    }
}

/// When a level starts updating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateTrigger {
    /// As soon as the buffer holds one batch.
    #[default]
    WarmupBatch,
    /// Only once the buffer is full.
    FullBuffer,
}

impl FromStr for UpdateTrigger {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warmup_batch" => Ok(UpdateTrigger::WarmupBatch),
            "full_buffer" => Ok(UpdateTrigger::FullBuffer),
            _ => Err(Error::Config(format!(
                "unknown update trigger '{s}' (expected warmup_batch or full_buffer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub upper: LevelParams,
    pub lower: LevelParams,
    pub trigger: UpdateTrigger,
    pub features: FeatureParams,
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        AgentConfig {
            kind,
            upper: LevelParams::upper(),
            lower: LevelParams::lower(),
            trigger: UpdateTrigger::default(),
            features: FeatureParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.upper.validate("upper")?;
        self.lower.validate("lower")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub period: usize,
    pub collected: Vec<f64>,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub metrics: EpisodeMetrics,
    /// Start cell followed by the cell after every period.
    pub trajectory: Vec<Cell>,
    pub slots: Vec<SlotRecord>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    observer: Observer,
    node_count: usize,
    upper: DdpgPair,
    lower: Option<DdpgPair>,
    upper_buf: ReplayBuffer,
    lower_buf: ReplayBuffer,
    rng: SimRng,
    upper_updates: u64,
    lower_updates: u64,
}

fn maybe_update(pair: &mut DdpgPair, buf: &ReplayBuffer, trigger: UpdateTrigger, rng: &mut SimRng) -> Result<bool> {
    let ready = match trigger {
        UpdateTrigger::WarmupBatch => buf.len() >= pair.params.batch_size,
        UpdateTrigger::FullBuffer => buf.is_full(),
    };
    if ready {
        let batch = buf.sample(pair.params.batch_size, rng)?;
        pair.update(&batch)?;
    }
    Ok(ready)
}

impl Agent {
    /// Networks are initialised from `init_rng`; `rng` drives exploration
    /// and minibatch sampling.
    pub fn new(cfg: AgentConfig, scenario: Arc<ScenarioConfig>, init_rng: &mut SimRng, rng: SimRng) -> Result<Self> {
        cfg.validate()?;
        let observer = Observer::new(scenario.clone(), cfg.features.clone())?;
        let obs_dim = observer.len();
        let nodes = scenario.nodes.len();
        let k = FlightAction::COUNT;
        let (upper, lower) = match cfg.kind {
            AgentKind::Tbh => (
                DdpgPair::new(obs_dim, k, ActionCoding::Discrete, cfg.upper.clone(), init_rng)?,
                Some(DdpgPair::new(obs_dim, nodes, ActionCoding::Simplex, cfg.lower.clone(), init_rng)?),
            ),
            AgentKind::Tbjn => (
                DdpgPair::new(obs_dim, k + nodes, ActionCoding::Mixed { discrete: k }, cfg.upper.clone(), init_rng)?,
                None,
            ),
            AgentKind::Tdma => (
                DdpgPair::new(obs_dim, k, ActionCoding::Discrete, cfg.upper.clone(), init_rng)?,
                None,
            ),
        };
        Ok(Agent {
            upper_buf: ReplayBuffer::new(cfg.upper.buffer_capacity)?,
            lower_buf: ReplayBuffer::new(cfg.lower.buffer_capacity)?,
            cfg,
            observer,
            node_count: nodes,
            upper,
            lower,
            rng,
            upper_updates: 0,
            lower_updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn kind(&self) -> AgentKind {
        self.cfg.kind
    }

    pub fn observer(&self) -> &Observer {
        &self.observer
    }

    pub fn upper(&self) -> &DdpgPair {
        &self.upper
    }

    pub fn lower(&self) -> Option<&DdpgPair> {
        self.lower.as_ref()
    }

    pub fn upper_buffer(&self) -> &ReplayBuffer {
        &self.upper_buf
    }

    pub fn lower_buffer(&self) -> &ReplayBuffer {
        &self.lower_buf
    }

    /// `(upper, lower)` update counts.
    pub fn updates(&self) -> (u64, u64) {
        (self.upper_updates, self.lower_updates)
    }

    /// Runs one episode; in [`Mode::Train`] actions carry exploration noise,
    /// transitions are stored and networks updated as they arrive.
    pub fn run_episode(&mut self, env: &Env, env_rng: &mut SimRng, mode: Mode) -> Result<EpisodeRecord> {
        if env.node_count() != self.node_count {
            return Err(Error::Config(format!(
                "agent built for {} nodes, environment has {}",
                self.node_count,
                env.node_count()
            )));
        }
        let train = mode == Mode::Train;
        let m_slots = env.slots_per_period();
        let mut state = env.reset(env_rng);
        let mut obs = self.observer.observe(&state).values;
        let mut history: Vec<OptionOutcome> = Vec::new();
        let mut trajectory = vec![state.uav_cell];
        let mut slots = Vec::new();

        while !state.is_terminal() {
            let (option, joint_alloc, upper_action) = match self.cfg.kind {
                AgentKind::Tbh | AgentKind::Tdma => {
                    let a = ddpg::select_option(&self.upper, &obs, train, &mut self.rng)?;
                    (a, None, a.one_hot())
                }
                AgentKind::Tbjn => {
                    let (a, alloc) = ddpg::tbjn_policy(&self.upper, &obs, train, &mut self.rng)?;
                    let mut code = a.one_hot();
                    code.extend_from_slice(alloc.fractions());
                    (a, Some(alloc), code)
                }
            };
            let flight = env.step_flight(&mut state, option)?;
            let mut upper_reward = flight.reward;
            let per_slot_obs = self.cfg.kind == AgentKind::Tbh;
            let mut obs_m = if per_slot_obs {
                self.observer.observe(&state).values
            } else {
                Vec::new()
            };
            let mut reports = Vec::with_capacity(m_slots);
            for m in 0..m_slots {
                let alloc: BandwidthAction = match self.cfg.kind {
                    AgentKind::Tbh => {
                        let lower = self.lower.as_ref().expect("two-level agent");
                        ddpg::select_allocation(lower, &obs_m, train, &mut self.rng)?
                    }
                    AgentKind::Tbjn => joint_alloc.clone().expect("joint allocation"),
                    AgentKind::Tdma => ddpg::tdma_allocation(env, &state),
                };
                let mut report = env.step_comm(&mut state, &alloc, env_rng)?;
                report.flags.collision = flight.collision;
                upper_reward += report.reward;
                if per_slot_obs {
                    let next = self.observer.observe(&state).values;
                    if train {
                        let done = (state.landed || state.crashed_out) && m + 1 == m_slots;
                        self.lower_buf.push(Transition {
                            obs: std::mem::take(&mut obs_m),
                            action: alloc.fractions().to_vec(),
                            reward: report.reward,
                            next_obs: next.clone(),
                            terminal: done,
                        });
                        let lower = self.lower.as_mut().expect("two-level agent");
                        if maybe_update(lower, &self.lower_buf, self.cfg.trigger, &mut self.rng)? {
                            self.lower_updates += 1;
                        }
                    }
                    obs_m = next;
                }
                slots.push(SlotRecord {
                    period: state.period_idx,
                    collected: report.collected.clone(),
                    fractions: report.fractions.clone(),
                });
                reports.push(report);
            }
            let next_obs = if per_slot_obs {
                obs_m
            } else {
                self.observer.observe(&state).values
            };
            if train {
                self.upper_buf.push(Transition {
                    obs: std::mem::take(&mut obs),
                    action: upper_action,
                    reward: upper_reward,
                    next_obs: next_obs.clone(),
                    terminal: state.landed || state.crashed_out,
                });
                if maybe_update(&mut self.upper, &self.upper_buf, self.cfg.trigger, &mut self.rng)? {
                    self.upper_updates += 1;
                }
            }
            obs = next_obs;
            trajectory.push(state.uav_cell);
            history.push(OptionOutcome {
                action: option,
                flight,
                reports,
                upper_reward,
            });
        }
        Ok(EpisodeRecord {
            metrics: episode_metrics(&history),
            trajectory,
            slots,
        })
    }

    pub fn checkpoint(&self, episodes_done: u64) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: self.cfg.kind,
            config: self.cfg.clone(),
            feature_hash: self.observer.spec().hash(),
            obs_dim: self.observer.len(),
            node_count: self.node_count,
            upper: self.upper.to_snapshot(),
            lower: self.lower.as_ref().map(DdpgPair::to_snapshot),
            rng: RngState::capture(&self.rng),
            upper_updates: self.upper_updates,
            lower_updates: self.lower_updates,
            episodes: episodes_done,
        }
    }

    /// Rebuilds an agent; replay memories start empty.
    pub fn from_checkpoint(cp: &Checkpoint, scenario: Arc<ScenarioConfig>) -> Result<Self> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", cp.version)));
        }
        let observer = Observer::new(scenario.clone(), cp.config.features.clone())?;
        if observer.spec().hash() != cp.feature_hash {
            return Err(Error::Checkpoint("feature extractor hash mismatch".into()));
        }
        if observer.len() != cp.obs_dim || scenario.nodes.len() != cp.node_count {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} nodes and {} observation entries, scenario gives {} and {}",
                cp.node_count,
                cp.obs_dim,
                scenario.nodes.len(),
                observer.len()
            )));
        }
        let upper = DdpgPair::from_snapshot(&cp.upper)?;
        let lower = cp.lower.as_ref().map(DdpgPair::from_snapshot).transpose()?;
        if (cp.kind == AgentKind::Tbh) != lower.is_some() || upper.obs_dim() != cp.obs_dim {
            return Err(Error::Checkpoint("network layout does not match agent kind".into()));
        }
        Ok(Agent {
            upper_buf: ReplayBuffer::new(cp.config.upper.buffer_capacity)?,
            lower_buf: ReplayBuffer::new(cp.config.lower.buffer_capacity)?,
            cfg: cp.config.clone(),
            observer,
            node_count: cp.node_count,
            upper,
            lower,
            rng: cp.rng.restore()?,
            upper_updates: cp.upper_updates,
            lower_updates: cp.lower_updates,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed_hex: String,
    pub stream: u64,
    /// Decimal word position.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &SimRng) -> Self {
        RngState {
            seed_hex: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<SimRng> {
        let bytes = hex::decode(&self.seed_hex).map_err(|e| Error::Checkpoint(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Checkpoint(format!("rng word position: {e}")))?;
        let mut rng = SimRng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: AgentKind,
    pub config: AgentConfig,
    pub feature_hash: String,
    pub obs_dim: usize,
    pub node_count: usize,
    pub upper: PairSnapshot,
    pub lower: Option<PairSnapshot>,
    pub rng: RngState,
    pub upper_updates: u64,
    pub lower_updates: u64,
    pub episodes: u64,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvOptions;
    use crate::scenario::builtin;
    use crate::seeded_rng;

    fn quick_cfg(kind: AgentKind) -> AgentConfig {
        let mut c = AgentConfig::new(kind);
        for l in [&mut c.upper, &mut c.lower] {
            l.hidden = vec![16, 16];
            l.batch_size = 8;
            l.buffer_capacity = 500;
        }
        c
    }

    fn setup(kind: AgentKind, seed: u64) -> (Env, Agent) {
        let scen = Arc::new(builtin("scenario1").unwrap());
        let env = Env::new(scen.clone(), EnvOptions::default()).unwrap();
        let agent = Agent::new(quick_cfg(kind), scen, &mut seeded_rng(seed, 3), seeded_rng(seed, 2)).unwrap();
        (env, agent)
    }

    #[test]
    fn lower_buffer_grows_m_times_faster() {
        let (env, mut agent) = setup(AgentKind::Tbh, 1);
        let rec = agent.run_episode(&env, &mut seeded_rng(1, 1), Mode::Train).unwrap();
        let periods = rec.metrics.periods;
        assert_eq!(agent.upper_buffer().len(), periods.min(500));
        assert_eq!(agent.lower_buffer().len(), (4 * periods).min(500));
        assert_eq!(rec.slots.len(), 4 * periods);
        assert_eq!(rec.trajectory.len(), periods + 1);
    }

    #[test]
    fn single_level_kinds_store_upper_only() {
        for kind in [AgentKind::Tbjn, AgentKind::Tdma] {
            let (env, mut agent) = setup(kind, 2);
            let rec = agent.run_episode(&env, &mut seeded_rng(2, 1), Mode::Train).unwrap();
            assert_eq!(agent.upper_buffer().len(), rec.metrics.periods.min(500));
            assert!(agent.lower_buffer().is_empty());
            assert!(agent.lower().is_none());
        }
    }

    #[test]
    fn tbjn_holds_allocation_within_period() {
        let (env, mut agent) = setup(AgentKind::Tbjn, 3);
        let rec = agent.run_episode(&env, &mut seeded_rng(3, 1), Mode::Train).unwrap();
        for chunk in rec.slots.chunks(4) {
            assert!(chunk.iter().all(|s| s.fractions == chunk[0].fractions));
        }
    }

    #[test]
    fn tdma_serves_one_node_per_slot() {
        let (env, mut agent) = setup(AgentKind::Tdma, 4);
        let rec = agent.run_episode(&env, &mut seeded_rng(4, 1), Mode::Eval).unwrap();
        for s in &rec.slots {
            assert_eq!(s.fractions.iter().filter(|&&f| f == 1.0).count(), 1);
        }
    }

    #[test]
    fn eval_does_not_learn_or_store() {
        let (env, mut agent) = setup(AgentKind::Tbh, 5);
        let before = agent.upper().actor.clone();
        agent.run_episode(&env, &mut seeded_rng(5, 1), Mode::Eval).unwrap();
        assert!(agent.upper_buffer().is_empty());
        assert_eq!(agent.upper().actor, before);
    }

    #[test]
    fn upper_update_leaves_lower_untouched() {
        let (_, mut agent) = setup(AgentKind::Tbh, 6);
        let obs_dim = agent.observer().len();
        for k in 0..8 {
            agent.upper_buf.push(Transition {
                obs: vec![0.1 * k as f64; obs_dim],
                action: FlightAction::Hover.one_hot(),
                reward: k as f64,
                next_obs: vec![0.2; obs_dim],
                terminal: false,
            });
        }
        let lower = agent.lower().unwrap().to_snapshot();
        let upper = agent.upper().to_snapshot();
        assert!(maybe_update(&mut agent.upper, &agent.upper_buf, UpdateTrigger::WarmupBatch, &mut agent.rng).unwrap());
        assert_eq!(agent.lower().unwrap().to_snapshot(), lower);
        assert_ne!(agent.upper().to_snapshot(), upper);
    }

    #[test]
    fn full_buffer_trigger_waits() {
        let (_, mut agent) = setup(AgentKind::Tdma, 7);
        let obs_dim = agent.observer().len();
        agent.upper_buf.push(Transition {
            obs: vec![0.0; obs_dim],
            action: FlightAction::Hover.one_hot(),
            reward: 0.0,
            next_obs: vec![0.0; obs_dim],
            terminal: true,
        });
        for _ in 0..8 {
            let t = agent.upper_buf.iter_fifo().next().unwrap().clone();
            agent.upper_buf.push(t);
        }
        assert!(!maybe_update(&mut agent.upper, &agent.upper_buf, UpdateTrigger::FullBuffer, &mut agent.rng).unwrap());
        assert!(maybe_update(&mut agent.upper, &agent.upper_buf, UpdateTrigger::WarmupBatch, &mut agent.rng).unwrap());
    }

    #[test]
    fn checkpoint_round_trip_resumes_identically() {
        let (env, mut agent) = setup(AgentKind::Tbh, 8);
        agent.run_episode(&env, &mut seeded_rng(8, 1), Mode::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        agent.checkpoint(1).save(&path).unwrap();
        let cp = Checkpoint::load(&path).unwrap();
        let mut restored = Agent::from_checkpoint(&cp, env.config_arc().clone()).unwrap();
        let a = agent.run_episode(&env, &mut seeded_rng(9, 1), Mode::Eval).unwrap();
        let b = restored.run_episode(&env, &mut seeded_rng(9, 1), Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(RngState::capture(&agent.rng), RngState::capture(&restored.rng));
    }

    #[test]
    fn checkpoint_scenario_mismatch() {
        let (_, agent) = setup(AgentKind::Tbh, 10);
        let mut other = builtin("scenario1").unwrap();
        other.nodes.pop();
        let err = Agent::from_checkpoint(&agent.checkpoint(0), Arc::new(other)).unwrap_err();
        assert!(err.is_config());
        let mut cp = agent.checkpoint(0);
        cp.feature_hash = "00".into();
        let scen = Arc::new(builtin("scenario1").unwrap());
        assert!(matches!(Agent::from_checkpoint(&cp, scen), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn agent_kind_parsing() {
        assert_eq!("TBH".parse::<AgentKind>().unwrap(), AgentKind::Tbh);
        assert_eq!("tdma".parse::<AgentKind>().unwrap(), AgentKind::Tdma);
        assert!("sac".parse::<AgentKind>().is_err());
    }
}
