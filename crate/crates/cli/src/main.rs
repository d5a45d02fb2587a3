//! `uavdc`: train, evaluate and sweep UAV data-collection agents.
//!
//! Exit status: 0 on success, 1 for configuration errors (bad flags,
//! scenario files, overrides or checkpoints), 2 for failures while running.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uavdc_core::agents::AgentKind;
use uavdc_core::channel::RobustParams;
use uavdc_core::harness::{self, EvalConfig, RunConfig, SweepConfig, SweepKind};
use uavdc_core::parallel::Execution;
use uavdc_core::Error;

#[derive(Parser, Debug)]
#[command(name = "uavdc", version, about = "UAV data collection under jamming: hierarchical DDPG and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one agent per seed and write logs, checkpoints and a summary.
    Train(Common),
    /// Evaluate a checkpoint (or an untrained agent) without exploration.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train over a grid of one swept parameter and collate the results.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// data_growth, node_count, robustness or hidden_size.
        #[arg(long)]
        kind: String,
        /// Comma-separated grid values; defaults depend on the kind.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Built-in scenario name or path to a scenario TOML file.
    #[arg(long, default_value = "scenario1")]
    scenario: String,
    /// tbh, tbjn or tdma.
    #[arg(long, default_value = "tbh")]
    agent: String,
    /// Training episodes per seed (evaluation episodes for `eval`).
    #[arg(long, default_value_t = 300)]
    episodes: usize,
    /// Seeds as a list `0,1,2` or a half-open range `0..5`.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Output directory; defaults to `$UAVDC_OUT_DIR/<command>` or `runs/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Greedy evaluation episodes after training.
    #[arg(long, default_value_t = 0)]
    eval_episodes: usize,
    /// Disable log-normal shadowing.
    #[arg(long)]
    no_fading: bool,
    /// Enable the robust channel with this CSI error bound (dB).
    #[arg(long)]
    delta_csi: Option<f64>,
    /// Mean of the residual interference factor for the robust channel.
    #[arg(long)]
    delta_inf: Option<f64>,
    /// Run seeds one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Config(format!("cannot parse seeds `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn parse_grid(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse grid value `{p}`")))
        })
        .collect()
}

fn run_config(c: &Common, command: &str) -> Result<RunConfig, Error> {
    let agent: AgentKind = c.agent.parse()?;
    let out = c
        .out
        .clone()
        .unwrap_or_else(|| harness::default_output_root().join(command));
    let mut cfg = RunConfig::new(&c.scenario, agent, c.episodes, parse_seeds(&c.seeds)?, out);
    cfg.eval_episodes = c.eval_episodes;
    cfg.fading = !c.no_fading;
    if c.delta_csi.is_some() || c.delta_inf.is_some() {
        cfg.robust = Some(RobustParams {
            delta_csi: c.delta_csi.unwrap_or(0.0),
            delta_inf: c.delta_inf.unwrap_or(0.0),
        });
    }
    cfg.overrides = c.set.iter().map(|s| harness::parse_override(s)).collect::<Result<_, _>>()?;
    cfg.execution = if c.sequential { Execution::Sequential } else { Execution::Parallel };
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(c) => {
            let cfg = run_config(&c, "train")?;
            let report = harness::cmd_train(&cfg)?;
            for run in &report.runs {
                let n = run.logs.len();
                let tail = &run.logs[n.saturating_sub(harness::TAIL_EPISODES)..];
                let mean = tail.iter().map(|l| l.reward).sum::<f64>() / tail.len() as f64;
                println!("seed {}: {} episodes, mean reward over the last {} = {mean:.2}", run.seed, n, tail.len());
            }
            if cfg.eval_episodes > 0 {
                for run in &report.runs {
                    let mut eval = cfg.clone();
                    eval.seeds = vec![run.seed];
                    eval.output_dir = report.run_dir.join(format!("eval_seed{}", run.seed));
                    let r = harness::cmd_eval(&EvalConfig {
                        checkpoint: Some(report.run_dir.join(format!("checkpoint_seed{}.json", run.seed))),
                        run: eval,
                    })?;
                    println!("seed {} eval: avg reward {:.2}", run.seed, r.avg_reward);
                }
            }
            println!("config_hash={} written to {}", report.config_hash, report.run_dir.display());
        }
        Command::Eval { common, checkpoint } => {
            let mut cfg = run_config(&common, "eval")?;
            cfg.eval_episodes = cfg.episodes;
            let r = harness::cmd_eval(&EvalConfig { checkpoint, run: cfg.clone() })?;
            println!(
                "{} episodes: avg reward {:.2}, avg collisions {:.2}, collected {:.2} Mb, lost {:.2} Mb",
                r.records.len(),
                r.avg_reward,
                r.avg_collisions,
                r.total_collected,
                r.total_lost
            );
            println!("written to {}", cfg.output_dir.display());
        }
        Command::Sweep { common, kind, grid } => {
            let kind: SweepKind = kind.parse()?;
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => kind.default_grid(),
            };
            let base = run_config(&common, "sweep")?;
            let rows = harness::cmd_sweep(&SweepConfig { kind, grid, base: base.clone() })?;
            for r in &rows {
                println!(
                    "{}={} seed {}: tail reward {:.2}, lost {:.2} Mb",
                    kind.as_str(),
                    r.value,
                    r.seed,
                    r.tail_reward,
                    r.tail_lost_mb
                );
            }
            println!("written to {}", base.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("0,1,2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("3..6").unwrap(), vec![3, 4, 5]);
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("").unwrap().is_empty());
        assert!(parse_grid("x").is_err());
    }
}
