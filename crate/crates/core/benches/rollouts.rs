//! Sequential vs rayon fan-out over independent seeds: greedy rollouts and a
//! short training run.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uavdc_core::agents::{Agent, AgentConfig, AgentKind, Mode};
use uavdc_core::env::{Env, EnvOptions};
use uavdc_core::harness::{self, RunConfig};
use uavdc_core::parallel::{self, Execution};
use uavdc_core::scenario::builtin;
use uavdc_core::seeded_rng;

const SEEDS: u64 = 4;

fn rollouts(exec: Execution, env: &Env, kind: AgentKind) -> f64 {
    let seeds: Vec<u64> = (0..SEEDS).collect();
    parallel::map(exec, seeds, |seed| {
        let mut agent = Agent::new(
            AgentConfig::new(kind),
            env.config_arc().clone(),
            &mut seeded_rng(seed, 3),
            seeded_rng(seed, 2),
        )
        .unwrap();
        let rec = agent.run_episode(env, &mut seeded_rng(seed, 4), Mode::Eval).unwrap();
        rec.metrics.reward
    })
    .iter()
    .sum()
}

fn bench_rollouts(c: &mut Criterion) {
    let env = Env::new(Arc::new(builtin("scenario1").unwrap()), EnvOptions::default()).unwrap();
    let mut g = c.benchmark_group("eval_rollouts");
    g.sample_size(10);
    for kind in [AgentKind::Tbh, AgentKind::Tdma] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            g.bench_with_input(BenchmarkId::new(format!("{kind}"), format!("{exec:?}")), &exec, |b, &exec| {
                b.iter(|| black_box(rollouts(exec, &env, kind)))
            });
        }
    }
    g.finish();
}

fn bench_training(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut g = c.benchmark_group("train_short");
    g.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut cfg = RunConfig::new("scenario1", AgentKind::Tbh, 3, (0..SEEDS).collect(), dir.path().join(format!("{exec:?}")))
            .with_override("hidden", 32)
            .with_override("upper.batch", 16)
            .with_override("lower.batch", 16);
        cfg.execution = exec;
        g.bench_function(format!("{exec:?}"), |b| b.iter(|| black_box(harness::cmd_train(&cfg).unwrap().summary.len())));
    }
    g.finish();
}

criterion_group!(benches, bench_rollouts, bench_training);
criterion_main!(benches);
