//! Small feed-forward networks with rectifier hidden layers, hand-written
//! reverse-mode gradients, Adam and soft target updates.
//!
//! Weights are stored `in × out` so a batch `X` (rows are samples) maps to
//! `X·W + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Output transformation applied after the last affine layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Identity,
    Softmax,
    /// Independent softmax over consecutive groups of the given sizes.
    Grouped(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<Dense>,
    head: Head,
}

/// Gradients for every parameter of an [`Mlp`], same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<Dense>,
}

/// Intermediate values kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of each layer (the first is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    softmax_in_place(&mut v);
    v
}

impl Mlp {
    /// Uniform fan-in initialisation: every weight and bias from
    /// `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        Self::check_dims(dims, &head)?;
        let layers = dims
            .windows(2)
            .map(|d| {
                let bound = 1.0 / (d[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((d[0], d[1]), || rng.random_range(-bound..bound)),
                    b: Array1::from_shape_simple_fn(d[1], || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
            head,
        })
    }

    pub fn zeros(dims: &[usize], head: Head) -> Result<Self> {
        Self::check_dims(dims, &head)?;
        let layers = dims
            .windows(2)
            .map(|d| Dense {
                w: Array2::zeros((d[0], d[1])),
                b: Array1::zeros(d[1]),
            })
            .collect();
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
            head,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        let mut dims = vec![layers[0].w.nrows()];
        for (k, l) in layers.iter().enumerate() {
            if l.w.nrows() != *dims.last().unwrap() || l.b.len() != l.w.ncols() {
                return Err(Error::Shape(format!("layer {k} does not chain")));
            }
            if l.w.iter().chain(l.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("layer {k} has non-finite parameters")));
            }
            dims.push(l.w.ncols());
        }
        Self::check_dims(&dims, &head)?;
        Ok(Mlp { dims, layers, head })
    }

    fn check_dims(dims: &[usize], head: &Head) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
        }
        if let Head::Grouped(groups) = head {
            if groups.contains(&0) || groups.iter().sum::<usize>() != *dims.last().unwrap() {
                return Err(Error::Shape(format!(
                    "softmax groups {groups:?} do not cover {} outputs",
                    dims.last().unwrap()
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Index ranges normalized by the head.
    pub fn softmax_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match &self.head {
            Head::Identity => vec![],
            Head::Softmax => std::iter::once(0..self.output_dim()).collect(),
            Head::Grouped(groups) => {
                let mut start = 0;
                groups
                    .iter()
                    .map(|g| {
                        start += g;
                        start - g..start
                    })
                    .collect()
            }
        }
    }

    fn apply_head(&self, out: &mut Array2<f64>) {
        let ranges = self.softmax_ranges();
        for mut row in out.rows_mut() {
            let s = row.as_slice_mut().expect("standard layout");
            for r in &ranges {
                softmax_in_place(&mut s[r.clone()]);
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.forward_logits(x)?;
        for r in self.softmax_ranges() {
            softmax_in_place(&mut h[r]);
        }
        Ok(h)
    }

    /// Output of the last affine layer, before the head.
    pub fn forward_logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut next = l.b.to_vec();
            for (i, &xi) in h.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (o, &wij) in next.iter_mut().zip(l.w.row(i).iter()) {
                    *o += xi * wij;
                }
            }
            if k < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = next;
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Trace> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            inputs.push(h);
            h = if k < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        self.apply_head(&mut h);
        Ok(Trace {
            inputs,
            pre,
            output: h,
        })
    }

    /// Reverse pass for a loss whose gradient w.r.t. the network output is
    /// `upstream`. Gradients are summed over the batch. Returns the parameter
    /// gradients and the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, upstream: ArrayView2<f64>) -> Result<(GradBundle, Array2<f64>)> {
        if upstream.dim() != trace.output.dim() {
            return Err(Error::Shape(format!(
                "upstream {:?} vs output {:?}",
                upstream.dim(),
                trace.output.dim()
            )));
        }
        let mut delta = upstream.as_standard_layout().into_owned();
        for r in self.softmax_ranges() {
            for (mut d, y) in delta.rows_mut().into_iter().zip(trace.output.rows()) {
                let ys = &y.as_slice().expect("standard layout")[r.clone()];
                let ds = &mut d.as_slice_mut().expect("standard layout")[r.clone()];
                let dot: f64 = ys.iter().zip(ds.iter()).map(|(a, b)| a * b).sum();
                for (dv, yv) in ds.iter_mut().zip(ys) {
                    *dv = yv * (*dv - dot);
                }
            }
        }
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            if k < last {
                ndarray::Zip::from(&mut delta)
                    .and(&trace.pre[k])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            let gw = trace.inputs[k].t().dot(&delta).as_standard_layout().into_owned();
            let gb = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.layers[k].w.t()).as_standard_layout().into_owned();
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        Ok((GradBundle { layers: grads }, delta))
    }

    /// Multiply-accumulate count of one forward pass (2 per weight).
    pub fn flop_count(&self) -> u64 {
        flop_count(&self.dims)
    }

    pub fn to_snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            dims: self.dims.clone(),
            head: self.head.clone(),
            weights: self.layers.iter().map(|l| l.w.iter().copied().collect()).collect(),
            biases: self.layers.iter().map(|l| l.b.to_vec()).collect(),
        }
    }

    pub fn from_snapshot(s: &MlpSnapshot) -> Result<Self> {
        if s.weights.len() + 1 != s.dims.len() || s.biases.len() + 1 != s.dims.len() {
            return Err(Error::Checkpoint("layer count does not match dims".into()));
        }
        let layers = s
            .dims
            .windows(2)
            .zip(s.weights.iter().zip(&s.biases))
            .map(|(d, (w, b))| {
                let w = Array2::from_shape_vec((d[0], d[1]), w.clone())
                    .map_err(|e| Error::Checkpoint(format!("weights: {e}")))?;
                if b.len() != d[1] {
                    return Err(Error::Checkpoint("bias length".into()));
                }
                Ok(Dense {
                    w,
                    b: Array1::from_vec(b.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, s.head.clone()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn flop_count(dims: &[usize]) -> u64 {
    dims.windows(2).map(|d| 2 * d[0] as u64 * d[1] as u64).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub dims: Vec<usize>,
    pub head: Head,
    /// Row-major `in × out` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradBundle {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradBundle {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.dim()),
                    b: Array1::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.w.dim() == l.w.dim() && g.b.len() == l.b.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let shapes: Vec<Vec<f64>> = net
            .layers
            .iter()
            .flat_map(|l| [vec![0.0; l.w.len()], vec![0.0; l.b.len()]])
            .collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step, descending along `grads`.
pub fn adam_step(net: &mut Mlp, grads: &GradBundle, st: &mut AdamState) -> Result<()> {
    let expected = 2 * net.layers.len();
    if !grads.matches(net) || st.m.len() != expected || st.v.len() != expected {
        return Err(Error::Shape("gradients or optimizer state do not match network".into()));
    }
    st.t += 1;
    let t = st.t as i32;
    let c1 = 1.0 - st.beta1.powi(t);
    let c2 = 1.0 - st.beta2.powi(t);
    let (b1, b2, lr, eps) = (st.beta1, st.beta2, st.lr, st.eps);
    let mut k = 0;
    for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
        let params = [
            (layer.w.as_slice_mut().expect("standard layout"), g.w.as_slice().expect("standard layout")),
            (layer.b.as_slice_mut().expect("standard layout"), g.b.as_slice().expect("standard layout")),
        ];
        for (p, g) in params {
            let (m, v) = (&mut st.m[k], &mut st.v[k]);
            if m.len() != p.len() || v.len() != p.len() {
                return Err(Error::Shape("optimizer moment shape".into()));
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
            k += 1;
        }
    }
    Ok(())
}

/// `target <- eps * source + (1 - eps) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, eps: f64) -> Result<()> {
    if target.dims != source.dims {
        return Err(Error::Shape(format!(
            "soft update between {:?} and {:?}",
            target.dims, source.dims
        )));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        if eps == 1.0 {
            t.w.assign(&s.w);
            t.b.assign(&s.b);
        } else if eps != 0.0 {
            t.w.zip_mut_with(&s.w, |a, &b| *a = eps * b + (1.0 - eps) * *a);
            t.b.zip_mut_with(&s.b, |a, &b| *a = eps * b + (1.0 - eps) * *a);
        }
    }
    Ok(())
}
