//! Actor-critic pair with target networks, plus the action-selection rules
//! for each level.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::replay::Transition;
use crate::env::{BandwidthAction, Env, EnvState, FlightAction};
use crate::nn::{self, AdamState, Head, Mlp, MlpSnapshot};
use crate::{Error, Result};

/// Hyperparameters of one decision level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Soft target update rate.
    pub tau: f64,
    /// Gaussian noise scale on the actor logits while training.
    pub noise: f64,
    /// Noise on the allocation logits of a joint flight+allocation actor.
    pub alloc_noise: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
}

impl LevelParams {
    pub fn upper() -> Self {
        LevelParams {
            hidden: vec![128, 128],
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            gamma: 0.99,
            tau: 0.005,
            noise: 3.0,
            alloc_noise: 1.0,
            buffer_capacity: 30_000,
            batch_size: 128,
        }
    }

    pub fn lower() -> Self {
        LevelParams {
            gamma: 0.995,
            tau: 1e-5,
            noise: 1.0,
            ..Self::upper()
        }
    }

    pub fn validate(&self, level: &str) -> Result<()> {
        let bad = |f: &str, r: &str| Err(Error::Config(format!("{level}.{f}: {r}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "needs at least one nonzero layer");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", "must lie in [0, 1]");
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("lr", "must be >= 0");
        }
        if !(self.noise >= 0.0 && self.alloc_noise >= 0.0) {
            return bad("noise", "must be >= 0");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size", "must be >= 1 and <= buffer_capacity");
        }
        Ok(())
    }
}

/// How actor outputs become the action fed to the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCoding {
    /// Argmax over all outputs, one-hot.
    Discrete,
    /// Softmax fractions.
    Simplex,
    /// First `discrete` outputs are a one-hot choice, the rest fractions.
    Mixed { discrete: usize },
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn one_hot_into(row: &mut [f64], i: usize) {
    row.iter_mut().for_each(|v| *v = 0.0);
    row[i] = 1.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgPair {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub params: LevelParams,
    pub coding: ActionCoding,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

impl DdpgPair {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        coding: ActionCoding,
        params: LevelParams,
        rng: &mut R,
    ) -> Result<Self> {
        let head = match coding {
            ActionCoding::Discrete | ActionCoding::Simplex => Head::Softmax,
            ActionCoding::Mixed { discrete } => {
                if discrete == 0 || discrete >= act_dim {
                    return Err(Error::Config(format!(
                        "mixed action needs 0 < {discrete} < {act_dim}"
                    )));
                }
                Head::Grouped(vec![discrete, act_dim - discrete])
            }
        };
        let actor = Mlp::new(&dims(obs_dim, &params.hidden, act_dim), head, rng)?;
        let critic = Mlp::new(&dims(obs_dim + act_dim, &params.hidden, 1), Head::Identity, rng)?;
        Ok(DdpgPair {
            actor_opt: AdamState::new(&actor, params.actor_lr),
            critic_opt: AdamState::new(&critic, params.critic_lr),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            params,
            coding,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Actor logits before the softmax head.
    pub fn scores(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward_logits(obs)
    }

    pub fn q_value(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let mut x = obs.to_vec();
        x.extend_from_slice(action);
        Ok(self.critic.forward(&x)?[0])
    }

    /// Action the target actor would take, coded as the critic sees it.
    fn code_actions(&self, out: &mut Array2<f64>) {
        for mut row in out.rows_mut() {
            let r = row.as_slice_mut().expect("standard layout");
            match self.coding {
                ActionCoding::Discrete => {
                    let i = argmax(r);
                    one_hot_into(r, i);
                }
                ActionCoding::Simplex => {}
                ActionCoding::Mixed { discrete } => {
                    let i = argmax(&r[..discrete]);
                    one_hot_into(&mut r[..discrete], i);
                }
            }
        }
    }

    fn stack(&self, rows: impl Iterator<Item = Vec<f64>>, n: usize, width: usize) -> Result<Array2<f64>> {
        let flat: Vec<f64> = rows.flatten().collect();
        Array2::from_shape_vec((n, width), flat).map_err(|e| Error::Shape(e.to_string()))
    }

    fn check_batch(&self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for t in batch {
            if t.obs.len() != self.obs_dim() || t.next_obs.len() != self.obs_dim() {
                return Err(Error::Dimension {
                    expected: self.obs_dim(),
                    got: t.obs.len().max(t.next_obs.len()),
                });
            }
            if t.action.len() != self.act_dim() {
                return Err(Error::Dimension {
                    expected: self.act_dim(),
                    got: t.action.len(),
                });
            }
        }
        Ok(())
    }

    /// `r + gamma * Q'(s', pi'(s'))` for every transition, bootstrap dropped
    /// at terminal states.
    pub fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let n = batch.len();
        let next = self.stack(batch.iter().map(|t| t.next_obs.clone()), n, self.obs_dim())?;
        let mut a = self.target_actor.forward_batch(next.view())?.output;
        self.code_actions(&mut a);
        let input = ndarray::concatenate![ndarray::Axis(1), next, a];
        let q = self.target_critic.forward_batch(input.view())?.output;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.terminal {
                    t.reward
                } else {
                    t.reward + self.params.gamma * q[[i, 0]]
                }
            })
            .collect())
    }

    pub fn critic_target(&self, reward: f64, next_obs: &[f64], terminal: bool) -> Result<f64> {
        let t = Transition {
            obs: next_obs.to_vec(),
            action: vec![0.0; self.act_dim()],
            reward,
            next_obs: next_obs.to_vec(),
            terminal,
        };
        Ok(self.critic_targets(&[&t])?[0])
    }

    fn critic_inputs(&self, batch: &[&Transition]) -> Result<Array2<f64>> {
        let w = self.obs_dim() + self.act_dim();
        self.stack(
            batch.iter().map(|t| {
                let mut r = t.obs.clone();
                r.extend_from_slice(&t.action);
                r
            }),
            batch.len(),
            w,
        )
    }

    /// Mean squared error between `Q(s, a)` and `targets`.
    pub fn critic_loss(&self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        let x = self.critic_inputs(batch)?;
        let q = self.critic.forward_batch(x.view())?.output;
        Ok(q.column(0).iter().zip(targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / targets.len() as f64)
    }

    /// `-mean Q(s, pi(s))` with the soft actor output as the action.
    pub fn actor_loss(&self, batch: &[&Transition]) -> Result<f64> {
        let obs = self.stack(batch.iter().map(|t| t.obs.clone()), batch.len(), self.obs_dim())?;
        let a = self.actor.forward_batch(obs.view())?.output;
        let input = ndarray::concatenate![ndarray::Axis(1), obs, a];
        let q = self.critic.forward_batch(input.view())?.output;
        Ok(-q.mean().unwrap_or(0.0))
    }

    /// One Adam step on the critic loss; returns the loss before the step.
    pub fn critic_step(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        let n = batch.len() as f64;
        let x = self.critic_inputs(batch)?;
        let trace = self.critic.forward_batch(x.view())?;
        let q = trace.output.column(0);
        let loss = q.iter().zip(targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / n;
        let up = Array2::from_shape_fn((batch.len(), 1), |(i, _)| 2.0 * (q[i] - targets[i]) / n);
        let (grads, _) = self.critic.backward(&trace, up.view())?;
        nn::adam_step(&mut self.critic, &grads, &mut self.critic_opt)?;
        Ok(loss)
    }

    /// One Adam step on the actor through a frozen critic; returns the loss
    /// before the step.
    pub fn actor_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        let n = batch.len();
        let d = self.obs_dim();
        let obs = self.stack(batch.iter().map(|t| t.obs.clone()), n, d)?;
        let at = self.actor.forward_batch(obs.view())?;
        let input = ndarray::concatenate![ndarray::Axis(1), obs, at.output];
        let ct = self.critic.forward_batch(input.view())?;
        let loss = -ct.output.mean().unwrap_or(0.0);
        let up = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, dinput) = self.critic.backward(&ct, up.view())?;
        let da = dinput.slice(s![.., d..]).to_owned();
        let (grads, _) = self.actor.backward(&at, da.view())?;
        nn::adam_step(&mut self.actor, &grads, &mut self.actor_opt)?;
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        nn::soft_update(&mut self.target_actor, &self.actor, self.params.tau)?;
        nn::soft_update(&mut self.target_critic, &self.critic, self.params.tau)
    }

    /// Critic step, actor step, then both target updates.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<Losses> {
        let targets = self.critic_targets(batch)?;
        let critic = self.critic_step(batch, &targets)?;
        let actor = self.actor_step(batch)?;
        self.soft_update_targets()?;
        Ok(Losses { critic, actor })
    }

    pub fn to_snapshot(&self) -> PairSnapshot {
        PairSnapshot {
            actor: self.actor.to_snapshot(),
            critic: self.critic.to_snapshot(),
            target_actor: self.target_actor.to_snapshot(),
            target_critic: self.target_critic.to_snapshot(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            params: self.params.clone(),
            coding: self.coding,
        }
    }

    pub fn from_snapshot(s: &PairSnapshot) -> Result<Self> {
        let pair = DdpgPair {
            actor: Mlp::from_snapshot(&s.actor)?,
            critic: Mlp::from_snapshot(&s.critic)?,
            target_actor: Mlp::from_snapshot(&s.target_actor)?,
            target_critic: Mlp::from_snapshot(&s.target_critic)?,
            actor_opt: s.actor_opt.clone(),
            critic_opt: s.critic_opt.clone(),
            params: s.params.clone(),
            coding: s.coding,
        };
        if pair.actor.dims() != pair.target_actor.dims() || pair.critic.dims() != pair.target_critic.dims() {
            return Err(Error::Checkpoint("target shapes differ from online networks".into()));
        }
        if pair.critic.input_dim() != pair.obs_dim() + pair.act_dim() {
            return Err(Error::Checkpoint("critic input does not match actor".into()));
        }
        Ok(pair)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSnapshot {
    pub actor: MlpSnapshot,
    pub critic: MlpSnapshot,
    pub target_actor: MlpSnapshot,
    pub target_critic: MlpSnapshot,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub params: LevelParams,
    pub coding: ActionCoding,
}

fn add_noise<R: Rng + ?Sized>(v: &mut [f64], scale: f64, rng: &mut R) {
    if scale > 0.0 {
        let n = Normal::new(0.0, scale).expect("finite scale");
        v.iter_mut().for_each(|x| *x += n.sample(rng));
    }
}

fn check_obs(pair: &DdpgPair, obs: &[f64]) -> Result<()> {
    if obs.len() != pair.obs_dim() {
        return Err(Error::Dimension {
            expected: pair.obs_dim(),
            got: obs.len(),
        });
    }
    Ok(())
}

/// Fractions from logits; renormalizes away the last rounding error.
pub fn fractions_from_logits(logits: &[f64]) -> BandwidthAction {
    let mut f = nn::softmax(logits);
    let sum: f64 = f.iter().sum();
    f.iter_mut().for_each(|v| *v /= sum);
    BandwidthAction::new(f).expect("softmax output is a distribution")
}

/// Argmax of the upper actor scores, Gaussian score noise when exploring.
pub fn select_option<R: Rng + ?Sized>(
    upper: &DdpgPair,
    obs: &[f64],
    explore: bool,
    rng: &mut R,
) -> Result<FlightAction> {
    check_obs(upper, obs)?;
    let mut s = upper.scores(obs)?;
    if explore {
        add_noise(&mut s, upper.params.noise, rng);
    }
    FlightAction::from_index(argmax(&s)).ok_or_else(|| Error::Action("upper actor width".into()))
}

/// Softmax of the lower actor logits, noise added before the softmax when
/// exploring.
pub fn select_allocation<R: Rng + ?Sized>(
    lower: &DdpgPair,
    obs: &[f64],
    explore: bool,
    rng: &mut R,
) -> Result<BandwidthAction> {
    check_obs(lower, obs)?;
    let mut s = lower.scores(obs)?;
    if explore {
        add_noise(&mut s, lower.params.noise, rng);
    }
    Ok(fractions_from_logits(&s))
}

/// Joint actor: flight scores then allocation logits.
pub fn tbjn_policy<R: Rng + ?Sized>(
    joint: &DdpgPair,
    obs: &[f64],
    explore: bool,
    rng: &mut R,
) -> Result<(FlightAction, BandwidthAction)> {
    check_obs(joint, obs)?;
    let k = FlightAction::COUNT;
    let mut s = joint.scores(obs)?;
    if s.len() <= k {
        return Err(Error::Action("joint actor has no allocation outputs".into()));
    }
    if explore {
        add_noise(&mut s[..k], joint.params.noise, rng);
        add_noise(&mut s[k..], joint.params.alloc_noise, rng);
    }
    let flight = FlightAction::from_index(argmax(&s[..k])).expect("six scores");
    Ok((flight, fractions_from_logits(&s[k..])))
}

/// Whole band to the node with the best full-band rate; lowest index on ties.
pub fn tdma_allocation(env: &Env, state: &EnvState) -> BandwidthAction {
    let rates = env.full_band_rates(state);
    BandwidthAction::exclusive(rates.len(), argmax(&rates))
}
