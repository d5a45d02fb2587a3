//! Observation pipeline: five layered maps, re-centred on the UAV and padded
//! with no-fly cells, then a frozen two-path convolutional extractor (global
//! average pooling and a local centre crop), flattened and followed by the
//! normalized battery level.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::EnvState;
use crate::scenario::{Cell, ScenarioConfig, ZoneKind};
use crate::{Error, Result};

pub const LAYERS: usize = 5;
pub const NO_FLY: usize = 0;
pub const COMM_OBSTACLE: usize = 1;
pub const START_LAND: usize = 2;
pub const NODE_DATA: usize = 3;
pub const JAMMER: usize = 4;

/// Dense `[layer][x][y]` stack of square maps.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    side: usize,
    data: Vec<f64>,
}

impl LayerStack {
    pub fn zeros(side: usize) -> Self {
        LayerStack {
            side,
            data: vec![0.0; LAYERS * side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    fn idx(&self, layer: usize, x: usize, y: usize) -> usize {
        (layer * self.side + x) * self.side + y
    }

    #[inline]
    pub fn get(&self, layer: usize, x: usize, y: usize) -> f64 {
        self.data[self.idx(layer, x, y)]
    }

    #[inline]
    pub fn set(&mut self, layer: usize, x: usize, y: usize, v: f64) {
        let i = self.idx(layer, x, y);
        self.data[i] = v;
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        let n = self.side * self.side;
        &self.data[layer * n..(layer + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// World-frame Y×Y×5 map.
pub type LayeredMap = LayerStack;
/// UAV-centred (2Y−1)×(2Y−1)×5 map.
pub type CenteredMap = LayerStack;

/// Interference-to-noise encoding of one jammer over the full band.
pub fn jammer_inr_value(power: f64, beamwidth: f64, iso_gain: f64, total_bw: f64, noise_psd: f64) -> f64 {
    let half_tan = crate::channel::half_angle_tan(beamwidth);
    let g_main = 4.0 * iso_gain / (half_tan * half_tan);
    (1.0 + power * g_main / (total_bw * noise_psd)).log10()
}

pub fn build_layers(cfg: &ScenarioConfig, state: &EnvState) -> LayeredMap {
    let y = cfg.grid.y_cells;
    let mut map = LayerStack::zeros(y);
    for z in &cfg.zones {
        let layers: &[usize] = match z.kind {
            ZoneKind::NoFly => &[NO_FLY],
            ZoneKind::CommObstacle => &[COMM_OBSTACLE],
            ZoneKind::Combined => &[NO_FLY, COMM_OBSTACLE],
            ZoneKind::StartLand => &[START_LAND],
        };
        for (cx, cy) in z.cells() {
            for &l in layers {
                map.set(l, cx, cy, 1.0);
            }
        }
    }
    for (n, &d) in cfg.nodes.iter().zip(&state.node_data) {
        let (cx, cy) = n.cell;
        map.set(NODE_DATA, cx, cy, map.get(NODE_DATA, cx, cy) + d);
    }
    let p = &cfg.physics;
    for j in &state.jammers {
        let (cx, cy) = j.cell;
        let v = jammer_inr_value(j.power, j.beamwidth, j.iso_gain, p.total_bw, p.noise_psd);
        map.set(JAMMER, cx, cy, map.get(JAMMER, cx, cy) + v);
    }
    map
}

/// Re-centre on the UAV: `out[c+dx][c+dy] = in[x+dx][y+dy]` with `c = Y-1`;
/// cells outside the world are no-fly with every other layer zero.
pub fn centralize(map: &LayeredMap, uav_cell: Cell) -> CenteredMap {
    let y = map.side();
    let side = 2 * y - 1;
    let c = (y - 1) as i64;
    let mut out = LayerStack::zeros(side);
    for i in 0..side {
        let wx = uav_cell.0 as i64 + i as i64 - c;
        for j in 0..side {
            let wy = uav_cell.1 as i64 + j as i64 - c;
            if wx < 0 || wy < 0 || wx >= y as i64 || wy >= y as i64 {
                out.set(NO_FLY, i, j, 1.0);
            } else {
                for l in 0..LAYERS {
                    out.set(l, i, j, map.get(l, wx as usize, wy as usize));
                }
            }
        }
    }
    out
}

/// Sizes of the frozen extractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureParams {
    /// Global path: adaptive average pool to `pooled × pooled`.
    pub pooled: usize,
    /// Local path: centre crop of `crop × crop`.
    pub crop: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Output channels of each convolution stage.
    pub channels: Vec<usize>,
    pub seed: u64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            pooled: 7,
            crop: 9,
            kernel: 3,
            stride: 2,
            channels: vec![8, 16],
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Conv2d {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    /// `[out][in][kx][ky]`
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv2d {
    fn seeded<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        let weight = (0..out_ch * in_ch * kernel * kernel)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            weight,
            bias: vec![0.0; out_ch],
        }
    }

    fn out_side(&self, side: usize) -> usize {
        (side - self.kernel) / self.stride + 1
    }

    /// Input/output layout `[ch][x][y]`, linear activation, no padding.
    fn apply(&self, input: &[f64], side: usize) -> (Vec<f64>, usize) {
        let os = self.out_side(side);
        let k = self.kernel;
        let mut out = vec![0.0; self.out_ch * os * os];
        for o in 0..self.out_ch {
            for ox in 0..os {
                for oy in 0..os {
                    let mut acc = self.bias[o];
                    for c in 0..self.in_ch {
                        let wbase = (o * self.in_ch + c) * k * k;
                        let ibase = c * side * side;
                        for kx in 0..k {
                            let ix = ox * self.stride + kx;
                            for ky in 0..k {
                                let iy = oy * self.stride + ky;
                                acc += self.weight[wbase + kx * k + ky] * input[ibase + ix * side + iy];
                            }
                        }
                    }
                    out[(o * os + ox) * os + oy] = acc;
                }
            }
        }
        (out, os)
    }
}

/// Frozen extractor: parameters plus the weights they generate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    params: FeatureParams,
    global: Vec<Conv2d>,
    local: Vec<Conv2d>,
    global_len: usize,
    local_len: usize,
}

impl FeatureSpec {
    pub fn new(params: FeatureParams, centered_side: usize) -> Result<Self> {
        if params.pooled == 0 || params.crop == 0 || params.kernel == 0 || params.stride == 0 {
            return Err(Error::Config("feature sizes must be positive".into()));
        }
        if params.crop > centered_side || params.pooled > centered_side {
            return Err(Error::Config(format!(
                "pool {} / crop {} exceed the centred map side {centered_side}",
                params.pooled, params.crop
            )));
        }
        let mut rng = crate::seeded_rng(params.seed, 0);
        let build = |side0: usize, rng: &mut crate::SimRng| -> Result<(Vec<Conv2d>, usize)> {
            let mut side = side0;
            let mut in_ch = LAYERS;
            let mut convs = Vec::new();
            for &out_ch in &params.channels {
                if side < params.kernel {
                    return Err(Error::Config(format!(
                        "feature map side {side} smaller than kernel {}",
                        params.kernel
                    )));
                }
                let conv = Conv2d::seeded(in_ch, out_ch, params.kernel, params.stride, rng);
                side = conv.out_side(side);
                in_ch = out_ch;
                convs.push(conv);
            }
            Ok((convs, in_ch * side * side))
        };
        let (global, global_len) = build(params.pooled, &mut rng)?;
        let (local, local_len) = build(params.crop, &mut rng)?;
        Ok(FeatureSpec {
            params,
            global,
            local,
            global_len,
            local_len,
        })
    }

    pub fn for_grid(params: FeatureParams, y_cells: usize) -> Result<Self> {
        Self::new(params, 2 * y_cells - 1)
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn global_len(&self) -> usize {
        self.global_len
    }

    pub fn local_len(&self) -> usize {
        self.local_len
    }

    pub fn observation_len(&self) -> usize {
        self.global_len + self.local_len + 1
    }

    /// Digest of the parameters and every frozen weight.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.params).expect("params serialize"));
        for conv in self.global.iter().chain(&self.local) {
            for w in conv.weight.iter().chain(&conv.bias) {
                h.update(w.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Set every convolution bias (zero by default).
    pub fn with_bias(mut self, value: f64) -> Self {
        for conv in self.global.iter_mut().chain(self.local.iter_mut()) {
            conv.bias.iter_mut().for_each(|b| *b = value);
        }
        self
    }
}

/// Adaptive average pooling of every layer to `out × out`.
pub fn average_pool(map: &LayerStack, out: usize) -> Vec<f64> {
    let s = map.side();
    let mut res = vec![0.0; LAYERS * out * out];
    for l in 0..LAYERS {
        let layer = map.layer(l);
        for i in 0..out {
            let (x0, x1) = (i * s / out, ((i + 1) * s).div_ceil(out));
            for j in 0..out {
                let (y0, y1) = (j * s / out, ((j + 1) * s).div_ceil(out));
                let mut acc = 0.0;
                for x in x0..x1 {
                    for y in y0..y1 {
                        acc += layer[x * s + y];
                    }
                }
                res[(l * out + i) * out + j] = acc / ((x1 - x0) * (y1 - y0)) as f64;
            }
        }
    }
    res
}

/// Central `crop × crop` window of every layer.
pub fn center_crop(map: &LayerStack, crop: usize) -> Vec<f64> {
    let s = map.side();
    let off = (s - crop) / 2;
    let mut res = Vec::with_capacity(LAYERS * crop * crop);
    for l in 0..LAYERS {
        for x in 0..crop {
            for y in 0..crop {
                res.push(map.get(l, off + x, off + y));
            }
        }
    }
    res
}

fn run_convs(convs: &[Conv2d], mut data: Vec<f64>, mut side: usize) -> Vec<f64> {
    for conv in convs {
        let (next, ns) = conv.apply(&data, side);
        data = next;
        side = ns;
    }
    data
}

pub fn extract_features(cmap: &CenteredMap, spec: &FeatureSpec) -> (Vec<f64>, Vec<f64>) {
    let pooled = average_pool(cmap, spec.params.pooled);
    let cropped = center_crop(cmap, spec.params.crop);
    (
        run_convs(&spec.global, pooled, spec.params.pooled),
        run_convs(&spec.local, cropped, spec.params.crop),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    pub values: Vec<f64>,
}

impl ObservationVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn battery(&self) -> f64 {
        *self.values.last().expect("nonempty observation")
    }
}

pub fn assemble(energy: f64, energy_budget: f64, feats: (Vec<f64>, Vec<f64>)) -> ObservationVector {
    let (mut values, local) = feats;
    values.extend(local);
    values.push((energy / energy_budget).clamp(0.0, 1.0));
    ObservationVector { values }
}

/// Full pipeline bound to one scenario.
#[derive(Debug, Clone)]
pub struct Observer {
    cfg: Arc<ScenarioConfig>,
    spec: FeatureSpec,
    d_max: f64,
}

impl Observer {
    pub fn new(cfg: Arc<ScenarioConfig>, params: FeatureParams) -> Result<Self> {
        let spec = FeatureSpec::for_grid(params, cfg.grid.y_cells)?;
        let d_max = cfg.max_capacity();
        Ok(Observer { cfg, spec, d_max })
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.observation_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn observe(&self, state: &EnvState) -> ObservationVector {
        let map = build_layers(&self.cfg, state);
        let mut cmap = centralize(&map, state.uav_cell);
        let side = cmap.side();
        for x in 0..side {
            for y in 0..side {
                let v = cmap.get(NODE_DATA, x, y);
                if v != 0.0 {
                    cmap.set(NODE_DATA, x, y, v / self.d_max);
                }
            }
        }
        let feats = extract_features(&cmap, &self.spec);
        assemble(state.energy, self.cfg.physics.energy_budget, feats)
    }
}
