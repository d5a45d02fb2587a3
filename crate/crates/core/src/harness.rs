//! Train, evaluate and sweep drivers. Every file written here is CSV (or a
//! JSON checkpoint) and starts with a `# config_hash=... seed=...` line.
//!
//! File schemas:
//! - `train_seed{S}.csv`: episode, reward, collected_mb, lost_mb, collisions, steps, wall_ms
//! - `summary.csv`: episode, reward_seed{S}..., mean, variance, band_lo, band_hi
//!   (band = mean -/+ half the variance across seeds)
//! - `eval_episodes.csv`: episode, reward, collected_mb, lost_mb, collisions, steps, landed
//! - `eval_summary.csv`: metric, value
//! - `eval_cumulative.csv`: slot, node_0... (cumulative Mb, first eval episode)
//! - `eval_allocation.csv`: block, first_slot, last_slot, node_0... (mean fractions per block)
//! - `eval_trajectory.csv`: step, x, y
//! - `sweep_{kind}.csv`: value, seed, episodes, tail_reward, tail_collected_mb, tail_lost_mb,
//!   tail_collisions, reward_min, reward_q1, reward_median, reward_q3, reward_max[, flop_count]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agents::{Agent, AgentConfig, AgentKind, Checkpoint, EpisodeRecord, Mode, UpdateTrigger};
use crate::channel::RobustParams;
use crate::env::{Env, EnvOptions, ReturnPenalty};
use crate::nn::flop_count;
use crate::parallel::{self, Execution};
use crate::scenario::{self, Cell, IoTNodeCfg, ScenarioConfig};
use crate::{seeded_rng, Error, Result};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "UAVDC_OUT_DIR";

const ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;
const PLACEMENT_STREAM: u64 = 5;

/// Slots averaged per row of the allocation table.
pub const ALLOCATION_BLOCK: usize = 12;
/// Episodes at the end of a run treated as converged.
pub const TAIL_EPISODES: usize = 100;

/// Output root from [`OUT_DIR_ENV`], or `runs` in the working directory.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Built-in name or path to a scenario file.
    pub scenario: String,
    pub agent: AgentKind,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub robust: Option<RobustParams>,
    pub fading: bool,
    pub output_dir: PathBuf,
    /// `key=value` overrides, applied in order.
    pub overrides: Vec<(String, String)>,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(scenario: &str, agent: AgentKind, episodes: usize, seeds: Vec<u64>, output_dir: PathBuf) -> Self {
        RunConfig {
            scenario: scenario.to_string(),
            agent,
            episodes,
            seeds,
            eval_episodes: 0,
            robust: None,
            fading: true,
            output_dir,
            overrides: Vec::new(),
            execution: Execution::default(),
        }
    }

    pub fn with_override(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.push((key.to_string(), value.to_string()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let scenario = scenario::resolve(&self.scenario)?;
        let mut r = Resolved {
            scenario,
            env: EnvOptions {
                fading: self.fading,
                robust: self.robust,
                ..EnvOptions::default()
            },
            agent: AgentConfig::new(self.agent),
            episodes: self.episodes,
            eval_episodes: self.eval_episodes,
            checkpoint_every: 100,
            record_wall_time: false,
        };
        for (k, v) in &self.overrides {
            r.apply(k, v)?;
        }
        r.scenario.validate()?;
        r.agent.validate()?;
        if let Some(rob) = &r.env.robust {
            rob.validate()?;
        }
        Ok(r)
    }
}

/// Parse `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("override `{s}` has an empty key")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Everything a run needs after loading the scenario and applying overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub env: EnvOptions,
    pub agent: AgentConfig,
    pub episodes: usize,
    pub eval_episodes: usize,
    /// Periodic checkpoint interval in episodes; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Fill `wall_ms`; off by default so logs are byte-reproducible.
    pub record_wall_time: bool,
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn layer_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let sizes: Vec<usize> = v
        .split(',')
        .map(|p| num::<usize>(key, p.trim()))
        .collect::<Result<_>>()?;
    // a single width means the default depth of two
    Ok(if sizes.len() == 1 { vec![sizes[0]; 2] } else { sizes })
}

impl Resolved {
    /// Apply one override; unknown keys are configuration errors.
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let ph = &mut self.scenario.physics;
        let rw = &mut self.env.rewards;
        match key {
            "env.max_periods" => self.env.max_periods = num(key, v)?,
            "env.fading" => self.env.fading = flag(key, v)?,
            "env.return_penalty" => {
                self.env.return_penalty = match v {
                    "recurring" => ReturnPenalty::Recurring,
                    "once" => ReturnPenalty::Once,
                    _ => return Err(Error::Config(format!("{key}: expected recurring or once"))),
                }
            }
            "reward.eps_cen" => rw.eps_cen = num(key, v)?,
            "reward.r_ls" => rw.r_ls = num(key, v)?,
            "reward.r_csn" => rw.r_csn = num(key, v)?,
            "reward.eps_re" => rw.eps_re = num(key, v)?,
            "reward.e_tsd" => rw.e_tsd = num(key, v)?,
            "reward.eps_ld1" => rw.eps_ld1 = num(key, v)?,
            "reward.eps_ld2" => rw.eps_ld2 = num(key, v)?,
            "physics.total_bw_hz" => ph.total_bw = num(key, v)?,
            "physics.rate_threshold_mb" => ph.rate_threshold = num(key, v)?,
            "physics.energy_budget" => ph.energy_budget = num(key, v)?,
            "physics.comm_slots" => ph.comm_slots_per_period = num(key, v)?,
            "physics.speed_m_per_s" => ph.speed = num(key, v)?,
            "physics.altitude_m" => ph.altitude = num(key, v)?,
            "physics.noise_psd_w_per_hz" => ph.noise_psd = num(key, v)?,
            "node.growth" => {
                let g: f64 = num(key, v)?;
                self.scenario.nodes.iter_mut().for_each(|n| n.growth = g);
            }
            "node.capacity" => {
                let c: f64 = num(key, v)?;
                self.scenario.nodes.iter_mut().for_each(|n| n.capacity = c);
            }
            "node.tx_power" => {
                let p: f64 = num(key, v)?;
                self.scenario.nodes.iter_mut().for_each(|n| n.tx_power = p);
            }
            "robust.delta_csi" => self.env.robust.get_or_insert_with(RobustParams::default).delta_csi = num(key, v)?,
            "robust.delta_inf" => self.env.robust.get_or_insert_with(RobustParams::default).delta_inf = num(key, v)?,
            "robust.enabled" => {
                if flag(key, v)? {
                    self.env.robust.get_or_insert_with(RobustParams::default);
                } else {
                    self.env.robust = None;
                }
            }
            "hidden" => {
                let h = layer_list(key, v)?;
                self.agent.upper.hidden = h.clone();
                self.agent.lower.hidden = h;
            }
            "features.seed" => self.agent.features.seed = num(key, v)?,
            "features.pooled" => self.agent.features.pooled = num(key, v)?,
            "features.crop" => self.agent.features.crop = num(key, v)?,
            "train.trigger" => self.agent.trigger = UpdateTrigger::from_str(v)?,
            "train.checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "train.wall_time" => self.record_wall_time = flag(key, v)?,
            "train.eval_episodes" => self.eval_episodes = num(key, v)?,
            _ => {
                let (level, field) = key
                    .split_once('.')
                    .ok_or_else(|| Error::Config(format!("unknown override key `{key}`")))?;
                let lp = match level {
                    "upper" => &mut self.agent.upper,
                    "lower" => &mut self.agent.lower,
                    _ => return Err(Error::Config(format!("unknown override key `{key}`"))),
                };
                match field {
                    "hidden" => lp.hidden = layer_list(key, v)?,
                    "actor_lr" => lp.actor_lr = num(key, v)?,
                    "critic_lr" => lp.critic_lr = num(key, v)?,
                    "gamma" => lp.gamma = num(key, v)?,
                    "tau" => lp.tau = num(key, v)?,
                    "noise" => lp.noise = num(key, v)?,
                    "alloc_noise" => lp.alloc_noise = num(key, v)?,
                    "buffer" => lp.buffer_capacity = num(key, v)?,
                    "batch" => lp.batch_size = num(key, v)?,
                    _ => return Err(Error::Config(format!("unknown override key `{key}`"))),
                }
            }
        }
        Ok(())
    }

    /// Short digest of everything that influences results, except the seed.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.scenario.to_toml_string());
        h.update(serde_json::to_vec(&(&self.env, &self.agent, self.episodes, self.eval_episodes)).expect("serializable"));
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn env(&self) -> Result<Env> {
        Env::new(Arc::new(self.scenario.clone()), self.env.clone())
    }

    /// Forward-pass FLOPs of every actor the agent runs.
    pub fn actor_flops(&self, kind: AgentKind, obs_dim: usize) -> u64 {
        let nodes = self.scenario.nodes.len();
        let dims = |hidden: &[usize], out: usize| {
            let mut d = vec![obs_dim];
            d.extend_from_slice(hidden);
            d.push(out);
            flop_count(&d)
        };
        match kind {
            AgentKind::Tbh => dims(&self.agent.upper.hidden, 6) + dims(&self.agent.lower.hidden, nodes),
            AgentKind::Tbjn => dims(&self.agent.upper.hidden, 6 + nodes),
            AgentKind::Tdma => dims(&self.agent.upper.hidden, 6),
        }
    }
}

/// One row of a training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub reward: f64,
    pub collected_mb: f64,
    pub lost_mb: f64,
    pub collisions: usize,
    pub steps: usize,
    pub wall_ms: u64,
}

impl EpisodeLog {
    fn from_record(episode: usize, rec: &EpisodeRecord, wall_ms: u64) -> Self {
        EpisodeLog {
            episode,
            reward: rec.metrics.reward,
            collected_mb: rec.metrics.total_collected,
            lost_mb: rec.metrics.total_lost,
            collisions: rec.metrics.collisions,
            steps: rec.metrics.periods,
            wall_ms,
        }
    }
}

fn header(hash: &str, seed: &str) -> String {
    format!("# config_hash={hash} seed={seed}\n")
}

fn csv_text(head: &str, rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    Ok(format!("{head}{body}"))
}

fn write_csv(path: &Path, head: &str, rows: &[Vec<String>]) -> Result<()> {
    fs::write(path, csv_text(head, rows)?)?;
    Ok(())
}

fn f(v: f64) -> String {
    v.to_string()
}

/// Header line and rows of a training log file.
pub fn training_log_csv(hash: &str, seed: u64, logs: &[EpisodeLog]) -> Result<String> {
    let mut rows = vec![["episode", "reward", "collected_mb", "lost_mb", "collisions", "steps", "wall_ms"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for l in logs {
        rows.push(vec![
            l.episode.to_string(),
            f(l.reward),
            f(l.collected_mb),
            f(l.lost_mb),
            l.collisions.to_string(),
            l.steps.to_string(),
            l.wall_ms.to_string(),
        ]);
    }
    csv_text(&header(hash, &seed.to_string()), &rows)
}

/// Strip the header line and parse a training log.
pub fn read_training_log(text: &str) -> Result<Vec<EpisodeLog>> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let p = |i: usize| -> Result<f64> { num("training log", get(i)) };
        out.push(EpisodeLog {
            episode: num("episode", get(0))?,
            reward: p(1)?,
            collected_mb: p(2)?,
            lost_mb: p(3)?,
            collisions: num("collisions", get(4))?,
            steps: num("steps", get(5))?,
            wall_ms: num("wall_ms", get(6))?,
        });
    }
    Ok(out)
}

/// Output of one seed's training.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub logs: Vec<EpisodeLog>,
    pub agent: Agent,
}

/// Train one seed. `on_checkpoint` receives periodic snapshots.
pub fn train_seed(
    r: &Resolved,
    seed: u64,
    mut on_checkpoint: impl FnMut(usize, &Agent) -> Result<()>,
) -> Result<SeedRun> {
    let env = r.env()?;
    let mut agent = Agent::new(
        r.agent.clone(),
        env.config_arc().clone(),
        &mut seeded_rng(seed, INIT_STREAM),
        seeded_rng(seed, AGENT_STREAM),
    )?;
    let mut env_rng = seeded_rng(seed, ENV_STREAM);
    let mut logs = Vec::with_capacity(r.episodes);
    for ep in 0..r.episodes {
        let t0 = Instant::now();
        let rec = agent.run_episode(&env, &mut env_rng, Mode::Train)?;
        let wall = if r.record_wall_time { t0.elapsed().as_millis() as u64 } else { 0 };
        logs.push(EpisodeLog::from_record(ep, &rec, wall));
        if r.checkpoint_every > 0 && (ep + 1) % r.checkpoint_every == 0 && ep + 1 < r.episodes {
            on_checkpoint(ep + 1, &agent)?;
        }
    }
    Ok(SeedRun { seed, logs, agent })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub episode: usize,
    pub rewards: Vec<f64>,
    pub mean: f64,
    /// Population variance across seeds.
    pub variance: f64,
}

pub fn summarize(runs: &[&[EpisodeLog]]) -> Vec<SummaryRow> {
    let n = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    (0..n)
        .map(|ep| {
            let rewards: Vec<f64> = runs.iter().map(|r| r[ep].reward).collect();
            let k = rewards.len() as f64;
            let mean = rewards.iter().sum::<f64>() / k;
            let variance = rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
            SummaryRow {
                episode: ep,
                rewards,
                mean,
                variance,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
}

fn seeds_label(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let r = cfg.resolve()?;
    let hash = r.config_hash();
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = cfg.output_dir.clone();
    let results = parallel::map(cfg.execution, cfg.seeds.clone(), |seed| -> Result<SeedRun> {
        let run = train_seed(&r, seed, |ep, agent| {
            agent
                .checkpoint(ep as u64)
                .save(dir.join(format!("checkpoint_seed{seed}_ep{ep}.json")))
        })?;
        fs::write(
            dir.join(format!("train_seed{seed}.csv")),
            training_log_csv(&hash, seed, &run.logs)?,
        )?;
        run.agent
            .checkpoint(r.episodes as u64)
            .save(dir.join(format!("checkpoint_seed{seed}.json")))?;
        Ok(run)
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let logs: Vec<&[EpisodeLog]> = runs.iter().map(|r| r.logs.as_slice()).collect();
    let summary = summarize(&logs);

    let mut head_row = vec!["episode".to_string()];
    head_row.extend(cfg.seeds.iter().map(|s| format!("reward_seed{s}")));
    head_row.extend(["mean", "variance", "band_lo", "band_hi"].map(String::from));
    let mut rows = vec![head_row];
    for s in &summary {
        let mut row = vec![s.episode.to_string()];
        row.extend(s.rewards.iter().map(|&v| f(v)));
        row.push(f(s.mean));
        row.push(f(s.variance));
        row.push(f(s.mean - 0.5 * s.variance));
        row.push(f(s.mean + 0.5 * s.variance));
        rows.push(row);
    }
    write_csv(&dir.join("summary.csv"), &header(&hash, &seeds_label(&cfg.seeds)), &rows)?;
    Ok(TrainReport {
        run_dir: dir,
        config_hash: hash,
        runs,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Checkpoint to load; `None` evaluates a freshly initialised agent.
    pub checkpoint: Option<PathBuf>,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<EpisodeRecord>,
    pub avg_reward: f64,
    pub avg_collisions: f64,
    pub total_collected: f64,
    pub total_lost: f64,
    pub landed_rate: f64,
    /// Mean fractions per block of [`ALLOCATION_BLOCK`] slots, first episode.
    pub allocation: Vec<Vec<f64>>,
    /// Cumulative Mb per node after every slot, first episode.
    pub cumulative: Vec<Vec<f64>>,
}

pub fn allocation_table(rec: &EpisodeRecord, block: usize) -> Vec<Vec<f64>> {
    rec.slots
        .chunks(block)
        .map(|c| {
            let n = c[0].fractions.len();
            let mut avg = vec![0.0; n];
            for s in c {
                for (a, v) in avg.iter_mut().zip(&s.fractions) {
                    *a += v;
                }
            }
            avg.iter_mut().for_each(|a| *a /= c.len() as f64);
            avg
        })
        .collect()
}

pub fn cumulative_collection(rec: &EpisodeRecord) -> Vec<Vec<f64>> {
    let mut acc: Vec<f64> = rec.slots.first().map(|s| vec![0.0; s.collected.len()]).unwrap_or_default();
    rec.slots
        .iter()
        .map(|s| {
            for (a, c) in acc.iter_mut().zip(&s.collected) {
                *a += c;
            }
            acc.clone()
        })
        .collect()
}

pub fn cmd_eval(cfg: &EvalConfig) -> Result<EvalReport> {
    let mut run = cfg.run.clone();
    if run.eval_episodes == 0 {
        run.eval_episodes = run.episodes;
    }
    let r = run.resolve()?;
    let env = r.env()?;
    let seed = run.seeds[0];
    let mut agent = match &cfg.checkpoint {
        Some(p) => {
            let cp = Checkpoint::load(p)?;
            Agent::from_checkpoint(&cp, env.config_arc().clone())?
        }
        None => Agent::new(
            r.agent.clone(),
            env.config_arc().clone(),
            &mut seeded_rng(seed, INIT_STREAM),
            seeded_rng(seed, AGENT_STREAM),
        )?,
    };
    let hash = r.config_hash();
    let mut rng = seeded_rng(seed, EVAL_STREAM);
    let records = (0..r.eval_episodes)
        .map(|_| agent.run_episode(&env, &mut rng, Mode::Eval))
        .collect::<Result<Vec<_>>>()?;

    let n = records.len() as f64;
    let sum = |g: &dyn Fn(&EpisodeRecord) -> f64| records.iter().map(g).sum::<f64>();
    let report = EvalReport {
        avg_reward: sum(&|e| e.metrics.reward) / n,
        avg_collisions: sum(&|e| e.metrics.collisions as f64) / n,
        total_collected: sum(&|e| e.metrics.total_collected),
        total_lost: sum(&|e| e.metrics.total_lost),
        landed_rate: sum(&|e| f64::from(u8::from(e.metrics.landed))) / n,
        allocation: allocation_table(&records[0], ALLOCATION_BLOCK),
        cumulative: cumulative_collection(&records[0]),
        records,
    };

    let dir = &run.output_dir;
    fs::create_dir_all(dir)?;
    let head = header(&hash, &seed.to_string());
    let nodes = env.node_count();
    let node_cols = |prefix: Vec<&str>| {
        let mut v: Vec<String> = prefix.into_iter().map(String::from).collect();
        v.extend((0..nodes).map(|i| format!("node_{i}")));
        v
    };

    let mut rows = vec![["episode", "reward", "collected_mb", "lost_mb", "collisions", "steps", "landed"]
        .map(String::from)
        .to_vec()];
    for (i, e) in report.records.iter().enumerate() {
        let m = &e.metrics;
        rows.push(vec![
            i.to_string(),
            f(m.reward),
            f(m.total_collected),
            f(m.total_lost),
            m.collisions.to_string(),
            m.periods.to_string(),
            m.landed.to_string(),
        ]);
    }
    write_csv(&dir.join("eval_episodes.csv"), &head, &rows)?;

    let summary = [
        ("episodes", n),
        ("avg_reward", report.avg_reward),
        ("avg_collisions", report.avg_collisions),
        ("total_collected_mb", report.total_collected),
        ("avg_collected_mb", report.total_collected / n),
        ("total_lost_mb", report.total_lost),
        ("avg_lost_mb", report.total_lost / n),
        ("landed_rate", report.landed_rate),
    ];
    let mut rows = vec![vec!["metric".to_string(), "value".to_string()]];
    rows.extend(summary.iter().map(|(k, v)| vec![k.to_string(), f(*v)]));
    write_csv(&dir.join("eval_summary.csv"), &head, &rows)?;

    let mut rows = vec![node_cols(vec!["slot"])];
    for (i, c) in report.cumulative.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(c.iter().map(|&v| f(v)));
        rows.push(row);
    }
    write_csv(&dir.join("eval_cumulative.csv"), &head, &rows)?;

    let first = &report.records[0];
    let total_slots = first.slots.len();
    let mut rows = vec![node_cols(vec!["block", "first_slot", "last_slot"])];
    for (b, a) in report.allocation.iter().enumerate() {
        let lo = b * ALLOCATION_BLOCK;
        let hi = (lo + ALLOCATION_BLOCK).min(total_slots) - 1;
        let mut row = vec![b.to_string(), lo.to_string(), hi.to_string()];
        row.extend(a.iter().map(|&v| f(v)));
        rows.push(row);
    }
    write_csv(&dir.join("eval_allocation.csv"), &head, &rows)?;

    let mut rows = vec![["step", "x", "y"].map(String::from).to_vec()];
    for (i, (x, y)) in first.trajectory.iter().enumerate() {
        rows.push(vec![i.to_string(), x.to_string(), y.to_string()]);
    }
    write_csv(&dir.join("eval_trajectory.csv"), &head, &rows)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    DataGrowth,
    NodeCount,
    Robustness,
    HiddenSize,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::DataGrowth => "data_growth",
            SweepKind::NodeCount => "node_count",
            SweepKind::Robustness => "robustness",
            SweepKind::HiddenSize => "hidden_size",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::DataGrowth => vec![0.1, 0.2, 0.3],
            SweepKind::NodeCount => vec![5.0, 7.0, 9.0, 11.0],
            SweepKind::Robustness => vec![0.0, 2.0, 4.0, 6.0],
            SweepKind::HiddenSize => vec![128.0, 256.0, 512.0, 1024.0],
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data_growth" => Ok(SweepKind::DataGrowth),
            "node_count" => Ok(SweepKind::NodeCount),
            "robustness" => Ok(SweepKind::Robustness),
            "hidden_size" => Ok(SweepKind::HiddenSize),
            _ => Err(Error::Config(format!(
                "unknown sweep `{s}` (expected data_growth, node_count, robustness or hidden_size)"
            ))),
        }
    }
}

/// Bandwidth used by robustness sweeps unless overridden.
pub const ROBUST_SWEEP_BW_HZ: f64 = 350_000.0;

/// Seed of the generator placing extra nodes in node-count sweeps.
pub const PLACEMENT_SEED: u64 = 7;

/// Keep the first `count` nodes, adding seeded extras on cells that are
/// neither blocked, start cells, nor already occupied.
pub fn with_node_count(cfg: &ScenarioConfig, count: usize, placement_seed: u64) -> Result<ScenarioConfig> {
    if count == 0 {
        return Err(Error::Config("node count must be >= 1".into()));
    }
    let mut out = cfg.clone();
    out.nodes.truncate(count);
    let template = cfg.nodes.last().cloned().ok_or_else(|| Error::Config("scenario has no nodes".into()))?;
    let init = cfg.nodes.iter().map(|n| n.init_data).sum::<f64>() / cfg.nodes.len() as f64;
    let y = cfg.grid.y_cells;
    let mut free: Vec<Cell> = (0..y)
        .flat_map(|x| (0..y).map(move |yy| (x, yy)))
        .filter(|&c| !cfg.blocks_flight(c) && !cfg.blocks_comm(c) && !cfg.is_start_land(c))
        .filter(|c| out.nodes.iter().all(|n| n.cell != *c))
        .collect();
    let mut rng = seeded_rng(placement_seed, PLACEMENT_STREAM);
    while out.nodes.len() < count {
        if free.is_empty() {
            return Err(Error::Config(format!("no free cell left for node {}", out.nodes.len())));
        }
        let cell = free.swap_remove(rng.random_range(0..free.len()));
        out.nodes.push(IoTNodeCfg {
            cell,
            init_data: init,
            ..template.clone()
        });
    }
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub base: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub episodes: usize,
    pub tail_reward: f64,
    pub tail_collected_mb: f64,
    pub tail_lost_mb: f64,
    pub tail_collisions: f64,
    /// Min, lower quartile, median, upper quartile, max of tail rewards.
    pub reward_quartiles: [f64; 5],
    pub flop_count: Option<u64>,
}

/// Linear-interpolation quantiles (min, q1, median, q3, max).
pub fn quartiles(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]
}

fn sweep_point(kind: SweepKind, base: &RunConfig, value: f64) -> Result<Resolved> {
    let mut run = base.clone();
    match kind {
        SweepKind::DataGrowth => run.overrides.insert(0, ("node.growth".into(), value.to_string())),
        SweepKind::Robustness => {
            run.overrides.insert(0, ("physics.total_bw_hz".into(), ROBUST_SWEEP_BW_HZ.to_string()));
            run.overrides.push(("robust.delta_csi".into(), value.to_string()));
        }
        SweepKind::HiddenSize => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::Config(format!("hidden size {value} is not a positive integer")));
            }
            run.overrides.push(("hidden".into(), (value as usize).to_string()));
        }
        SweepKind::NodeCount => {}
    }
    let mut r = run.resolve()?;
    if kind == SweepKind::NodeCount {
        if value.fract() != 0.0 || value < 1.0 {
            return Err(Error::Config(format!("node count {value} is not a positive integer")));
        }
        r.scenario = with_node_count(&r.scenario, value as usize, PLACEMENT_SEED)?;
    }
    Ok(r)
}

pub fn cmd_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let points = cfg
        .grid
        .iter()
        .map(|&v| sweep_point(cfg.kind, &cfg.base, v).map(|r| (v, r)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(f64, &Resolved, u64)> = points
        .iter()
        .flat_map(|(v, r)| cfg.base.seeds.iter().map(move |&s| (*v, r, s)))
        .collect();
    let kind = cfg.kind;
    let rows = parallel::map(cfg.base.execution, jobs, |(value, r, seed)| -> Result<SweepRow> {
        let run = train_seed(r, seed, |_, _| Ok(()))?;
        let tail = &run.logs[run.logs.len().saturating_sub(TAIL_EPISODES)..];
        let k = tail.len() as f64;
        let rewards: Vec<f64> = tail.iter().map(|l| l.reward).collect();
        Ok(SweepRow {
            value,
            seed,
            episodes: run.logs.len(),
            tail_reward: rewards.iter().sum::<f64>() / k,
            tail_collected_mb: tail.iter().map(|l| l.collected_mb).sum::<f64>() / k,
            tail_lost_mb: tail.iter().map(|l| l.lost_mb).sum::<f64>() / k,
            tail_collisions: tail.iter().map(|l| l.collisions as f64).sum::<f64>() / k,
            reward_quartiles: quartiles(&rewards),
            flop_count: (kind == SweepKind::HiddenSize).then(|| r.actor_flops(r.agent.kind, run.agent.observer().len())),
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let mut hashes = BTreeMap::new();
    for (v, r) in &points {
        hashes.insert(v.to_string(), r.config_hash());
    }
    let mut hash_label = String::new();
    for (i, (v, h)) in hashes.iter().enumerate() {
        if i > 0 {
            hash_label.push(',');
        }
        let _ = write!(hash_label, "{v}:{h}");
    }
    let mut head_row: Vec<String> = [
        "value",
        "seed",
        "episodes",
        "tail_reward",
        "tail_collected_mb",
        "tail_lost_mb",
        "tail_collisions",
        "reward_min",
        "reward_q1",
        "reward_median",
        "reward_q3",
        "reward_max",
    ]
    .map(String::from)
    .to_vec();
    if kind == SweepKind::HiddenSize {
        head_row.push("flop_count".into());
    }
    let mut table = vec![head_row];
    for r in &rows {
        let mut row = vec![
            f(r.value),
            r.seed.to_string(),
            r.episodes.to_string(),
            f(r.tail_reward),
            f(r.tail_collected_mb),
            f(r.tail_lost_mb),
            f(r.tail_collisions),
        ];
        row.extend(r.reward_quartiles.iter().map(|&q| f(q)));
        if let Some(fl) = r.flop_count {
            row.push(fl.to_string());
        }
        table.push(row);
    }
    fs::create_dir_all(&cfg.base.output_dir)?;
    write_csv(
        &cfg.base.output_dir.join(format!("sweep_{}.csv", kind.as_str())),
        &header(&hash_label, &seeds_label(&cfg.base.seeds)),
        &table,
    )?;
    Ok(rows)
}
