//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any gating criterion fails.
//!
//! Criterion 13 (long TBH vs TDMA comparison) only runs when
//! `UAVDC_ACCEPTANCE_EXTENDED=1`; it never gates.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;

use uavdc_core::agents::toy::train_toy;
use uavdc_core::agents::{select_allocation, tdma_allocation, ActionCoding, AgentKind, DdpgPair, LevelParams};
use uavdc_core::channel::{self, Perturbation, RealizedJammer, RobustParams, SinrInputs};
use uavdc_core::energy::{normalized_step_cost, propulsion_power_w};
use uavdc_core::env::{collected_volume, BandwidthAction, Env, EnvOptions, EnvState, FlightAction};
use uavdc_core::harness::{self, RunConfig};
use uavdc_core::nn::{soft_update, Head, Mlp};
use uavdc_core::observation::{build_layers, centralize, LayerStack, LAYERS, NO_FLY};
use uavdc_core::parallel::{self, Execution};
use uavdc_core::scenario::{builtin, RotorParams, ScenarioConfig};
use uavdc_core::{seeded_rng, SimRng};

type Outcome = Result<String, String>;
type Entry = (u32, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c01_energy() -> Outcome {
    let p = RotorParams::default();
    let hover = propulsion_power_w(0.0, &p).map_err(|e| e.to_string())?;
    let cruise = propulsion_power_w(20.0, &p).map_err(|e| e.to_string())?;
    let cost = normalized_step_cost(true, 20.0, &p).map_err(|e| e.to_string())?;
    check(
        rel(hover, 168.4642) < 1e-3 && rel(cruise, 178.2958) < 5e-3 && (cost - 1.0582).abs() <= 1e-3,
        format!("P(0)={hover:.4} W, P(20)={cruise:.4} W, moving cost={cost:.5} (tol 0.1%, 0.5%, 1e-3)"),
    )
}

fn c02_jammer_gain() -> Outcome {
    let h = 30.0;
    let gs = 1.7;
    let g = |d: f64, deg: f64| channel::jammer_gain(d, deg.to_radians(), h, gs).map_err(|e| e.to_string());
    let inside90 = g(10.0, 90.0)?;
    let outside90 = g(30.5, 90.0)?;
    let inside60 = g(5.0, 60.0)?;
    let outside60 = g(20.0, 60.0)?;
    check(
        inside90 == 4.0 * gs && outside90 == 0.0 && outside60 == 0.0 && (inside60 - 12.0 * gs).abs() <= 1e-12,
        format!("90deg inside {inside90} (=4Gs), outside {outside90}; 60deg inside {inside60} (12Gs +-1e-12)"),
    )
}

fn c03_collection_clamp() -> Outcome {
    let mut rng = seeded_rng(3, 0);
    let oracle = |rate: f64, delta: f64, xi: f64, rem: f64| {
        let v = rate * delta / 1e6;
        if v < xi {
            0.0
        } else if v > rem {
            rem
        } else {
            v
        }
    };
    let mut branches = [0usize; 3];
    for k in 0..10_000 {
        let rate = rng.random_range(0.0..2e7);
        let delta = rng.random_range(0.01..1.0);
        let xi = match k % 4 {
            0 => rate * delta / 1e6,
            _ => rng.random_range(0.0..5.0),
        };
        let rem = match k % 5 {
            0 => rate * delta / 1e6,
            _ => rng.random_range(0.0..20.0),
        };
        let got = collected_volume(rate, delta, xi, rem);
        let want = oracle(rate, delta, xi, rem);
        if got.to_bits() != want.to_bits() {
            return Err(format!("rate={rate} delta={delta} xi={xi} rem={rem}: {got} vs {want}"));
        }
        let v = rate * delta / 1e6;
        branches[if v < xi { 0 } else if v > rem { 1 } else { 2 }] += 1;
    }
    check(
        branches.iter().all(|&b| b > 0),
        format!("10^4 tuples bit-exact; below/capped/pass-through = {branches:?}"),
    )
}

fn c04_bandwidth_conservation() -> Outcome {
    let mut rng = seeded_rng(4, 0);
    let mut worst: f64 = 0.0;
    for k in 0..100_000u64 {
        let obs_dim = rng.random_range(1..40);
        let nodes = rng.random_range(1..12);
        let hidden = vec![rng.random_range(1..10)];
        let params = LevelParams {
            hidden,
            noise: rng.random_range(0.0..5.0),
            ..LevelParams::lower()
        };
        let mut pair = DdpgPair::new(obs_dim, nodes, ActionCoding::Simplex, params, &mut rng)
            .map_err(|e| e.to_string())?;
        let scale = 10f64.powf(rng.random_range(-2.0..3.0));
        for l in pair.actor.layers_mut() {
            l.w.mapv_inplace(|w| w * scale);
            l.b.mapv_inplace(|b| b * scale);
        }
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = select_allocation(&pair, &obs, k % 2 == 0, &mut rng).map_err(|e| e.to_string())?;
        let b = 1e6 * rng.random_range(0.1..2.0);
        let hz = a.alloc_hz(b);
        if hz.iter().any(|&x| x < 0.0 || x.is_nan()) {
            return Err(format!("negative or NaN allocation {hz:?}"));
        }
        worst = worst.max((hz.iter().sum::<f64>() - b).abs() / b);
    }
    check(worst <= 1e-6, format!("10^5 actors: max |sum - B|/B = {worst:.3e} (tol 1e-6), none negative"))
}

fn random_net(rng: &mut SimRng, head_kind: usize) -> Mlp {
    let depth = rng.random_range(1..4);
    let mut dims = vec![rng.random_range(1..6)];
    for _ in 1..depth {
        dims.push(rng.random_range(2..7));
    }
    let out = rng.random_range(2..7);
    dims.push(out);
    let head = match head_kind {
        0 => Head::Identity,
        1 => Head::Softmax,
        _ => {
            let first = rng.random_range(1..out);
            Head::Grouped(vec![first, out - first])
        }
    };
    Mlp::new(&dims, head, rng).expect("valid dims")
}

/// Smallest |pre-activation| over the hidden layers, to keep finite
/// differences away from ReLU kinks.
fn min_hidden_preact(net: &Mlp, x: &[f64]) -> f64 {
    let mut h = x.to_vec();
    let mut min = f64::INFINITY;
    let n = net.layers().len();
    for (k, l) in net.layers().iter().enumerate() {
        let z: Vec<f64> = (0..l.b.len())
            .map(|j| l.b[j] + h.iter().enumerate().map(|(i, v)| v * l.w[[i, j]]).sum::<f64>())
            .collect();
        if k + 1 < n {
            min = z.iter().fold(min, |m, v| m.min(v.abs()));
            h = z.iter().map(|v| v.max(0.0)).collect();
        }
    }
    min
}

fn c05_gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = seeded_rng(5, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for head_kind in 0..3 {
        let mut n = 0;
        while n < 100 {
            let mut net = random_net(&mut rng, head_kind);
            let d_in = net.input_dim();
            let x: Vec<f64> = (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect();
            if min_hidden_preact(&net, &x) < 1e-3 {
                continue;
            }
            n += 1;
            let g: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |net: &Mlp, x: &[f64]| -> f64 {
                net.forward(x).unwrap().iter().zip(&g).map(|(y, g)| y * g).sum()
            };
            let xa = Array2::from_shape_vec((1, d_in), x.clone()).unwrap();
            let trace = net.forward_batch(xa.view()).map_err(|e| e.to_string())?;
            let up = Array2::from_shape_vec((1, g.len()), g.clone()).unwrap();
            let (grads, dx) = net.backward(&trace, up.view()).map_err(|e| e.to_string())?;
            let mut cmp = |a: f64, num: f64| {
                let r = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                worst = worst.max(r);
                checked += 1;
            };
            for k in 0..net.layers().len() {
                let (rows, cols) = net.layers()[k].w.dim();
                for i in 0..rows {
                    for j in 0..cols {
                        let w0 = net.layers()[k].w[[i, j]];
                        net.layers_mut()[k].w[[i, j]] = w0 + H;
                        let lp = loss(&net, &x);
                        net.layers_mut()[k].w[[i, j]] = w0 - H;
                        let lm = loss(&net, &x);
                        net.layers_mut()[k].w[[i, j]] = w0;
                        cmp(grads.layers[k].w[[i, j]], (lp - lm) / (2.0 * H));
                    }
                }
                for j in 0..cols {
                    let b0 = net.layers()[k].b[j];
                    net.layers_mut()[k].b[j] = b0 + H;
                    let lp = loss(&net, &x);
                    net.layers_mut()[k].b[j] = b0 - H;
                    let lm = loss(&net, &x);
                    net.layers_mut()[k].b[j] = b0;
                    cmp(grads.layers[k].b[j], (lp - lm) / (2.0 * H));
                }
            }
            for i in 0..d_in {
                let mut xp = x.clone();
                xp[i] += H;
                let mut xm = x.clone();
                xm[i] -= H;
                cmp(dx[[0, i]], (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * H));
            }
        }
    }
    check(
        worst < 1e-4,
        format!("300 nets (100 per head), {checked} derivatives: max rel err {worst:.2e} (tol 1e-4, h=1e-5)"),
    )
}

fn c06_soft_update() -> Outcome {
    let mut rng = seeded_rng(6, 0);
    for _ in 0..200 {
        let dims = [3, 5, 2];
        let src = Mlp::new(&dims, Head::Identity, &mut rng).unwrap();
        let old = Mlp::new(&dims, Head::Identity, &mut rng).unwrap();
        let mut t = old.clone();
        soft_update(&mut t, &src, 0.0).map_err(|e| e.to_string())?;
        if t != old {
            return Err("eps=0 changed the target".into());
        }
        soft_update(&mut t, &src, 1.0).map_err(|e| e.to_string())?;
        if t != src {
            return Err("eps=1 did not copy the source".into());
        }
        let eps: f64 = rng.random_range(0.0..1.0);
        let mut t = old.clone();
        soft_update(&mut t, &src, eps).map_err(|e| e.to_string())?;
        for ((n, o), s) in t.layers().iter().zip(old.layers()).zip(src.layers()) {
            let pairs = n.w.iter().zip(o.w.iter()).zip(s.w.iter());
            let pairs_b = n.b.iter().zip(o.b.iter()).zip(s.b.iter());
            for ((&nv, &ov), &sv) in pairs.chain(pairs_b) {
                let expect = eps * sv + (1.0 - eps) * ov;
                if nv != expect || (nv - sv).abs() > (ov - sv).abs() {
                    return Err(format!("eps={eps}: {nv} from {ov} toward {sv}"));
                }
            }
        }
    }
    check(true, "200 pairs: eps=0 identity, eps=1 copy, convex blend and contraction exact".into())
}

fn c07_observation_geometry() -> Outcome {
    let mut rng = seeded_rng(7, 0);
    let cfg = builtin("scenario1").map_err(|e| e.to_string())?;
    let y = cfg.grid.y_cells;
    if y != 16 {
        return Err(format!("scenario1 is {y}x{y}"));
    }
    let env = Env::new(Arc::new(cfg.clone()), EnvOptions::default()).map_err(|e| e.to_string())?;
    let state = env.reset(&mut rng);
    let real = build_layers(&cfg, &state);
    let mut noise = LayerStack::zeros(y);
    for l in 0..LAYERS {
        for i in 0..y {
            for j in 0..y {
                noise.set(l, i, j, rng.random_range(-1.0..1.0));
            }
        }
    }
    for k in 0..1000 {
        let map = if k % 2 == 0 { &real } else { &noise };
        let uav = (rng.random_range(0..y), rng.random_range(0..y));
        let c = centralize(map, uav);
        if c.side() != 31 || c.as_slice().len() != 31 * 31 * 5 {
            return Err(format!("centred map side {}", c.side()));
        }
        for l in 0..LAYERS {
            for i in 0..31 {
                for j in 0..31 {
                    let wx = uav.0 as i64 + i as i64 - 15;
                    let wy = uav.1 as i64 + j as i64 - 15;
                    let inside = (0..y as i64).contains(&wx) && (0..y as i64).contains(&wy);
                    let want = if inside {
                        map.get(l, wx as usize, wy as usize)
                    } else if l == NO_FLY {
                        1.0
                    } else {
                        0.0
                    };
                    if c.get(l, i, j) != want {
                        return Err(format!("uav {uav:?} layer {l} ({i},{j}): {} vs {want}", c.get(l, i, j)));
                    }
                }
            }
        }
        if c.get(NO_FLY, 15, 15) != map.get(NO_FLY, uav.0, uav.1) {
            return Err("centre cell is not the UAV cell".into());
        }
    }
    check(true, "31x31x5, padding no_fly=1, index oracle on 1000 positions".into())
}

fn random_inputs(rng: &mut SimRng) -> SinrInputs {
    let jammers = rng.random_range(0..4);
    SinrInputs {
        tx_power: rng.random_range(0.01..1.0),
        gain: 10f64.powf(-rng.random_range(3.0..12.0)),
        bw: rng.random_range(1e3..1e6),
        noise_psd: 1e-17,
        interference: (0..jammers).map(|_| 10f64.powf(-rng.random_range(6.0..14.0))).collect(),
    }
}

fn c08_robust_sinr() -> Outcome {
    let mut rng = seeded_rng(8, 0);
    for _ in 0..10_000 {
        let inp = random_inputs(&mut rng);
        let zero = channel::robust_sinr(&inp, &RobustParams::default(), &mut rng);
        if zero.to_bits() != channel::sinr(&inp).to_bits() {
            return Err(format!("zero-uncertainty SINR {zero} vs {}", channel::sinr(&inp)));
        }
    }
    for _ in 0..100_000 {
        let inp = random_inputs(&mut rng);
        let rob = RobustParams {
            delta_csi: rng.random_range(0.0..10.0),
            delta_inf: rng.random_range(0.0..2.0),
        };
        let r = channel::robust_sinr(&inp, &rob, &mut rng);
        if r > channel::sinr(&inp) {
            return Err(format!("robust {r} above ideal {}", channel::sinr(&inp)));
        }
    }
    let rob = RobustParams {
        delta_csi: 6.0,
        delta_inf: 0.0,
    };
    let n = 100_000;
    let mean = (0..n)
        .map(|_| 10f64.powf(-Perturbation::sample(&rob, 0, &mut rng).eps_desired / 10.0))
        .sum::<f64>()
        / n as f64;
    check(
        rel(mean, 0.543) < 0.02,
        format!("exact at zero, robust <= ideal on 10^5, E[10^(-eps/10)] at 6 dB = {mean:.4} (0.543 +-2%)"),
    )
}

/// Full-band, fading-free rates from first principles.
fn oracle_rates(cfg: &ScenarioConfig, env: &Env, s: &EnvState) -> Vec<f64> {
    let p = &cfg.physics;
    let centre = |c: (usize, usize)| ((c.0 as f64 + 0.5) * cfg.grid.cell_len, (c.1 as f64 + 0.5) * cfg.grid.cell_len);
    let (ux, uy) = centre(s.uav_cell);
    let link = |cell: (usize, usize)| {
        let (gx, gy) = centre(cell);
        let horiz = ((ux - gx).powi(2) + (uy - gy).powi(2)).sqrt();
        let los = channel::is_los(s.uav_cell, cell, env.comm_mask());
        let alpha = if los { p.alpha_los } else { p.alpha_nlos };
        let d = (horiz * horiz + p.altitude * p.altitude).sqrt();
        (horiz, 10f64.powf(-alpha * d.log10() / 10.0))
    };
    let interference: f64 = s
        .jammers
        .iter()
        .map(|j: &RealizedJammer| {
            let (horiz, h) = link(j.cell);
            let t = (j.beamwidth / 2.0).tan();
            if horiz <= p.altitude * t {
                j.power * 4.0 * j.iso_gain / (t * t) * h
            } else {
                0.0
            }
        })
        .sum();
    cfg.nodes
        .iter()
        .map(|n| {
            let (_, h) = link(n.cell);
            let sinr = n.tx_power * h / (p.total_bw * p.noise_psd + interference);
            p.total_bw * (1.0 + sinr).log2()
        })
        .collect()
}

fn lowest_argmax(v: &[f64]) -> usize {
    let best = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter().position(|&x| x == best).unwrap()
}

fn c09_tdma_oracle() -> Outcome {
    let mut rng = seeded_rng(9, 0);
    let envs: Vec<(ScenarioConfig, Env)> = ["scenario1", "scenario2", "scenario3"]
        .iter()
        .map(|n| {
            let cfg = builtin(n).unwrap();
            let env = Env::new(Arc::new(cfg.clone()), EnvOptions::default()).unwrap();
            (cfg, env)
        })
        .collect();
    let mut close = 0;
    for k in 0..1000 {
        let (cfg, env) = &envs[k % envs.len()];
        let mut s = env.reset(&mut rng);
        let y = cfg.grid.y_cells;
        s.uav_cell = (rng.random_range(0..y), rng.random_range(0..y));
        s.node_data = cfg.nodes.iter().map(|n| rng.random_range(0.0..n.capacity)).collect();
        let oracle = oracle_rates(cfg, env, &s);
        let want = lowest_argmax(&oracle);
        let got = tdma_allocation(env, &s);
        let picked = got.fractions().iter().position(|&f| f == 1.0).ok_or("allocation is not exclusive")?;
        if got.fractions().iter().filter(|&&f| f != 0.0).count() != 1 {
            return Err(format!("state {k}: allocation {:?} is not exclusive", got.fractions()));
        }
        if picked != want {
            // rounding may reorder equal rates; the pick must still be a maximum
            let best = oracle[want];
            if (best - oracle[picked]).abs() > 1e-9 * best {
                return Err(format!("state {k}: picked node {picked}, oracle node {want}"));
            }
            close += 1;
        }
    }
    // two nodes sharing a cell tie exactly; the lower index must win
    let mut cfg = builtin("scenario1").unwrap();
    cfg.nodes[3].cell = cfg.nodes[1].cell;
    let env = Env::new(Arc::new(cfg.clone()), EnvOptions::default()).unwrap();
    let mut s = env.reset(&mut rng);
    s.uav_cell = cfg.nodes[1].cell;
    let tie = tdma_allocation(&env, &s);
    check(
        tie.fractions()[1] == 1.0,
        format!("1000 states match the recomputed argmax ({close} differ only by rounding between equal rates), exact tie goes to the lower index"),
    )
}

fn c10_toy() -> Outcome {
    let seeds: Vec<u64> = (0..5).collect();
    let results = parallel::map(Execution::Parallel, seeds, |s| train_toy(s, 5000, 200));
    let mut shares = Vec::new();
    for r in results {
        let o = r.map_err(|e| e.to_string())?;
        if o.updates > 5000 {
            return Err(format!("{} updates", o.updates));
        }
        shares.push(o.dominant_share);
    }
    let good = shares.iter().filter(|&&s| s >= 0.95).count();
    let text: Vec<String> = shares.iter().map(|s| format!("{s:.3}")).collect();
    check(good >= 4, format!("fast-node share after 5000 updates: [{}], {good}/5 >= 0.95", text.join(", ")))
}

fn c11_training_smoke() -> Outcome {
    let cfg = builtin("scenario1").map_err(|e| e.to_string())?;
    let env = Env::new(
        Arc::new(cfg.clone()),
        EnvOptions {
            fading: false,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let mut s = env.reset(&mut seeded_rng(0, 0));
    s.uav_cell = (10, 11);
    let out = env.step_flight(&mut s, FlightAction::East).map_err(|e| e.to_string())?;
    if !(out.collision && out.reward == -7.0 && s.uav_cell == (10, 11)) {
        return Err(format!("no-fly step: {out:?} at {:?}", s.uav_cell));
    }
    for full in [vec![0usize], vec![2, 5], vec![1, 3, 6]] {
        let mut s = env.reset(&mut seeded_rng(0, 0));
        s.node_data = vec![0.0; cfg.nodes.len()];
        for &i in &full {
            s.node_data[i] = cfg.nodes[i].capacity;
        }
        // full band to a node that is not full, so the full ones overflow
        let send = (0..cfg.nodes.len()).find(|i| !full.contains(i)).unwrap();
        let rep = env
            .step_comm(&mut s, &BandwidthAction::exclusive(cfg.nodes.len(), send), &mut seeded_rng(1, 0))
            .map_err(|e| e.to_string())?;
        let eps_cen = env.options().rewards.eps_cen;
        let expect = -(full.len() as f64) + eps_cen * rep.collected.iter().sum::<f64>();
        if rep.loss_nodes != full.len() || (rep.reward - expect).abs() > 1e-12 {
            return Err(format!("{} full nodes: {rep:?}", full.len()));
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = RunConfig::new("scenario1", AgentKind::Tbh, 300, vec![0, 1, 2], dir.path().to_path_buf());
    let report = harness::cmd_train(&run).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for r in &report.runs {
        let third = r.logs.len() / 3;
        let mean = |l: &[harness::EpisodeLog]| l.iter().map(|e| e.reward).sum::<f64>() / l.len() as f64;
        let first = mean(&r.logs[..third]);
        let last = mean(&r.logs[r.logs.len() - third..]);
        ok &= last > first;
        parts.push(format!("seed {}: {first:.1} -> {last:.1}", r.seed));
    }
    check(
        ok,
        format!("no-fly -7, data loss -1/node; first vs last third reward: {}", parts.join("; ")),
    )
}

fn c12_determinism() -> Outcome {
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for agent in AgentKind::ALL {
        let cfg = |dir: &str, exec: Execution| {
            let mut c = RunConfig::new("scenario1", agent, 6, vec![0, 1], base.path().join(dir))
                .with_override("hidden", 16)
                .with_override("env.max_periods", 20)
                .with_override("upper.batch", 8)
                .with_override("lower.batch", 8);
            c.execution = exec;
            c
        };
        let name = agent.to_string();
        let a = harness::cmd_train(&cfg(&format!("{name}_a"), Execution::Parallel)).map_err(|e| e.to_string())?;
        let b = harness::cmd_train(&cfg(&format!("{name}_b"), Execution::Parallel)).map_err(|e| e.to_string())?;
        let c = harness::cmd_train(&cfg(&format!("{name}_c"), Execution::Sequential)).map_err(|e| e.to_string())?;
        for f in ["train_seed0.csv", "train_seed1.csv", "summary.csv", "checkpoint_seed1.json"] {
            let read = |d: &std::path::Path| std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"));
            let (x, y, z) = (read(&a.run_dir)?, read(&b.run_dir)?, read(&c.run_dir)?);
            if x != y || x != z {
                return Err(format!("{name}: {f} differs between identical runs"));
            }
            files += 1;
        }
    }
    check(
        true,
        format!("{files} files byte-identical across repeated and sequential runs for tbh, tbjn, tdma"),
    )
}

fn c13_extended() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut avg = Vec::new();
    for agent in [AgentKind::Tbh, AgentKind::Tdma] {
        let mut run = RunConfig::new("scenario1", agent, 2500, vec![0], dir.path().join(agent.to_string()));
        run.eval_episodes = 100;
        harness::cmd_train(&run).map_err(|e| e.to_string())?;
        let report = harness::cmd_eval(&harness::EvalConfig {
            checkpoint: Some(run.output_dir.join("checkpoint_seed0.json")),
            run: run.clone(),
        })
        .map_err(|e| e.to_string())?;
        avg.push(report.avg_reward);
    }
    check(avg[0] > avg[1], format!("eval reward tbh {:.1} vs tdma {:.1}", avg[0], avg[1]))
}

fn main() -> ExitCode {
    // libtest-style arguments: `--list`, and name filters
    let args: Vec<String> = std::env::args().skip(1).collect();
    let list = args.iter().any(|a| a == "--list");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let id = |n: u32, name: &str| format!("criterion_{n:02}_{}", name.replace(' ', "_"));
    let criteria: [Entry; 12] = [
        (1, "energy constants", c01_energy),
        (2, "jammer cone gain", c02_jammer_gain),
        (3, "collection clamp oracle", c03_collection_clamp),
        (4, "bandwidth conservation", c04_bandwidth_conservation),
        (5, "gradient correctness", c05_gradients),
        (6, "soft update", c06_soft_update),
        (7, "observation geometry", c07_observation_geometry),
        (8, "robust SINR", c08_robust_sinr),
        (9, "TDMA oracle", c09_tdma_oracle),
        (10, "toy convergence", c10_toy),
        (11, "training smoke test", c11_training_smoke),
        (12, "determinism", c12_determinism),
    ];
    if list {
        for (n, name, _) in &criteria {
            println!("{}: test", id(*n, name));
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| id(n, name).contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if !filters.is_empty() {
    } else if std::env::var("UAVDC_ACCEPTANCE_EXTENDED").as_deref() == Ok("1") {
        let t = Instant::now();
        match std::panic::catch_unwind(c13_extended).unwrap_or_else(|_| Err("panicked".into())) {
            Ok(d) => println!("PASS 13 extended comparison (non-gating): {d} [{:.1}s]", t.elapsed().as_secs_f64()),
            Err(d) => println!("FAIL 13 extended comparison (non-gating): {d} [{:.1}s]", t.elapsed().as_secs_f64()),
        }
    } else {
        println!("SKIP 13 extended comparison (non-gating; set UAVDC_ACCEPTANCE_EXTENDED=1)");
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
