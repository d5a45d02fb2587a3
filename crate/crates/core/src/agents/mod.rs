//! Learners: the two-level agent, the joint-network and TDMA baselines,
//! replay memory and the toy allocation check.

pub mod ddpg;
pub mod replay;
pub mod toy;
pub mod trainer;

pub use ddpg::{
    select_allocation, select_option, tbjn_policy, tdma_allocation, ActionCoding, DdpgPair, LevelParams, Losses,
};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{Agent, AgentConfig, AgentKind, Checkpoint, EpisodeRecord, Mode, SlotRecord, UpdateTrigger};
