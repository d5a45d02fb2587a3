//! Two-node allocation bandit with a known optimum, used to sanity-check the
//! lower-level learner in isolation.
//!
//! Every step is terminal. The observation is a fresh random context that
//! carries no information, and the reward is `eps_cen` times the Mb
//! collected in one slot, node 0 transferring ten times faster than node 1.

use rand::Rng;

use super::ddpg::{self, ActionCoding, DdpgPair, LevelParams};
use super::replay::{ReplayBuffer, Transition};
use crate::{seeded_rng, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBandit {
    /// Mb per slot with the whole band.
    pub rates: [f64; 2],
    pub eps_cen: f64,
    pub obs_dim: usize,
}

impl Default for ToyBandit {
    fn default() -> Self {
        ToyBandit {
            rates: [10.0, 1.0],
            eps_cen: 1.5,
            obs_dim: 4,
        }
    }
}

impl ToyBandit {
    pub fn observe<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.obs_dim).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    pub fn reward(&self, fractions: &[f64]) -> f64 {
        self.eps_cen * fractions.iter().zip(&self.rates).map(|(f, r)| f * r).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyOutcome {
    /// Mean evaluation share of the fast node.
    pub dominant_share: f64,
    pub updates: usize,
}

/// Trains a lower-level pair with the default lower hyperparameters until
/// `max_updates` updates have run, then evaluates without noise.
pub fn train_toy(seed: u64, max_updates: usize, eval_steps: usize) -> Result<ToyOutcome> {
    let toy = ToyBandit::default();
    let params = LevelParams::lower();
    let mut init = seeded_rng(seed, 3);
    let mut pair = DdpgPair::new(toy.obs_dim, 2, ActionCoding::Simplex, params.clone(), &mut init)?;
    let mut rng = seeded_rng(seed, 2);
    let mut buf = ReplayBuffer::new(params.buffer_capacity)?;
    let mut updates = 0;
    while updates < max_updates {
        let obs = toy.observe(&mut rng);
        let a = ddpg::select_allocation(&pair, &obs, true, &mut rng)?;
        buf.push(Transition {
            reward: toy.reward(a.fractions()),
            action: a.fractions().to_vec(),
            next_obs: obs.clone(),
            obs,
            terminal: true,
        });
        if buf.len() >= params.batch_size {
            let batch = buf.sample(params.batch_size, &mut rng)?;
            pair.update(&batch)?;
            updates += 1;
        }
    }
    let mut share = 0.0;
    for _ in 0..eval_steps {
        let obs = toy.observe(&mut rng);
        share += ddpg::select_allocation(&pair, &obs, false, &mut rng)?.fractions()[0];
    }
    Ok(ToyOutcome {
        dominant_share: share / eval_steps as f64,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_prefers_fast_node() {
        let t = ToyBandit::default();
        assert_eq!(t.reward(&[1.0, 0.0]), 15.0);
        assert_eq!(t.reward(&[0.0, 1.0]), 1.5);
    }

    #[test]
    fn short_run_moves_toward_fast_node() {
        let out = train_toy(0, 300, 50).unwrap();
        assert_eq!(out.updates, 300);
        assert!(out.dominant_share > 0.5, "{out:?}");
    }
}
