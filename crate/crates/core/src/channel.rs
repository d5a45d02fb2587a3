//! Air-to-ground radio model.
//!
//! Path loss is `alpha * log10(d) + eta` with separate LoS/NLoS slopes and
//! Gaussian shadowing. Jammers radiate a vertical cone; inside the cone the
//! gain is `4 G_s / tan^2(theta/2)`, outside it is zero. The ideal SINR is
//! `P h / (b S_N + sum_j P_j G_j h_j)`; the robust variant perturbs the gains
//! by uniform dB offsets and inflates the noise floor by an exponential
//! residual-interference factor.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::scenario::{Cell, GridSpec, PhysicsParams, ZoneMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    /// meters
    pub distance: f64,
    pub los: bool,
    /// dB
    pub shadow_db: f64,
}

/// Whether shadow fading is drawn or pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    #[default]
    Enabled,
    Disabled,
}

impl Fading {
    pub fn from_flag(enabled: bool) -> Self {
        if enabled {
            Fading::Enabled
        } else {
            Fading::Disabled
        }
    }
}

/// Imperfect-CSI and residual-interference levels.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct RobustParams {
    /// Maximum CSI uncertainty, dB.
    pub delta_csi: f64,
    /// Mean residual-interference coefficient.
    pub delta_inf: f64,
}

impl RobustParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_csi >= 0.0 && self.delta_inf >= 0.0) {
            return Err(Error::validation("robust", "delta_csi and delta_inf must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrInputs {
    /// W
    pub tx_power: f64,
    /// Linear power gain of the desired link.
    pub gain: f64,
    /// Hz
    pub bw: f64,
    /// W/Hz
    pub noise_psd: f64,
    /// Per-jammer received interference `P_j G_j h_j`, W.
    pub interference: Vec<f64>,
}

impl SinrInputs {
    pub fn total_interference(&self) -> f64 {
        self.interference.iter().sum()
    }
}

/// A jammer with its per-episode draw fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedJammer {
    pub cell: Cell,
    /// W
    pub power: f64,
    /// rad
    pub beamwidth: f64,
    pub iso_gain: f64,
}

/// LoS test at cell-centre resolution: the link is NLoS iff the straight 2D
/// segment between the two cell centres passes through the interior of any
/// blocked cell. Endpoint cells are included.
pub fn is_los(uav_cell: Cell, ground_cell: Cell, comm_mask: &ZoneMask) -> bool {
    if uav_cell == ground_cell {
        return !comm_mask.contains(uav_cell);
    }
    let (ax, ay) = (uav_cell.0 as f64 + 0.5, uav_cell.1 as f64 + 0.5);
    let (bx, by) = (ground_cell.0 as f64 + 0.5, ground_cell.1 as f64 + 0.5);
    let (x_lo, x_hi) = (uav_cell.0.min(ground_cell.0), uav_cell.0.max(ground_cell.0));
    let (y_lo, y_hi) = (uav_cell.1.min(ground_cell.1), uav_cell.1.max(ground_cell.1));
    for cx in x_lo..=x_hi {
        for cy in y_lo..=y_hi {
            if comm_mask.contains((cx, cy)) && segment_enters_cell((ax, ay), (bx, by), (cx, cy)) {
                return false;
            }
        }
    }
    true
}

/// Slab clip of the segment against the closed unit box of `cell`, then a
/// check that the clipped piece reaches the open interior.
fn segment_enters_cell(a: (f64, f64), b: (f64, f64), cell: Cell) -> bool {
    let lo = [cell.0 as f64, cell.1 as f64];
    let hi = [lo[0] + 1.0, lo[1] + 1.0];
    let p = [a.0, a.1];
    let d = [b.0 - a.0, b.1 - a.1];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        if d[k] == 0.0 {
            if p[k] < lo[k] || p[k] > hi[k] {
                return false;
            }
        } else {
            let (mut ta, mut tb) = ((lo[k] - p[k]) / d[k], (hi[k] - p[k]) / d[k]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    let tm = 0.5 * (t0 + t1);
    let (mx, my) = (p[0] + tm * d[0], p[1] + tm * d[1]);
    mx > lo[0] && mx < hi[0] && my > lo[1] && my < hi[1]
}

/// 3D distance between the UAV at `altitude` over `uav_cell` and a ground cell centre.
pub fn link_distance(grid: &GridSpec, uav_cell: Cell, ground_cell: Cell, altitude: f64) -> f64 {
    let h = horizontal_distance(grid, uav_cell, ground_cell);
    (h * h + altitude * altitude).sqrt()
}

pub fn horizontal_distance(grid: &GridSpec, a: Cell, b: Cell) -> f64 {
    let (ax, ay) = grid.center_m(a);
    let (bx, by) = grid.center_m(b);
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

pub fn path_loss_db(d: f64, los: bool, shadow_db: f64, params: &PhysicsParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("link distance must be > 0, got {d}")));
    }
    let alpha = if los { params.alpha_los } else { params.alpha_nlos };
    Ok(alpha * d.log10() + shadow_db)
}

pub fn gain_from_loss(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn sample_shadow<R: Rng + ?Sized>(los: bool, params: &PhysicsParams, fading: Fading, rng: &mut R) -> f64 {
    match fading {
        Fading::Disabled => 0.0,
        Fading::Enabled => {
            let var = if los { params.sigma2_los } else { params.sigma2_nlos };
            Normal::new(0.0, var.sqrt()).expect("finite variance").sample(rng)
        }
    }
}

/// Cone gain of a downward-pointing jammer at horizontal offset `d_mj` from
/// the beam axis.
pub fn jammer_gain(d_mj: f64, beamwidth: f64, altitude: f64, iso_gain: f64) -> Result<f64> {
    if !(beamwidth > 0.0 && beamwidth < std::f64::consts::PI) {
        return Err(Error::Domain(format!("beamwidth must lie in (0, pi), got {beamwidth}")));
    }
    let half_tan = half_angle_tan(beamwidth);
    if d_mj <= altitude * half_tan {
        Ok(4.0 * iso_gain / (half_tan * half_tan))
    } else {
        Ok(0.0)
    }
}

/// `tan(theta/2)` via `sin / (1 + cos)`, which is exactly 1 at a right angle.
pub fn half_angle_tan(theta: f64) -> f64 {
    theta.sin() / (1.0 + theta.cos())
}

/// Per-jammer contributions `P_j G_j h_j` at the UAV.
pub fn jammer_terms<R: Rng + ?Sized>(
    uav_cell: Cell,
    jammers: &[RealizedJammer],
    grid: &GridSpec,
    physics: &PhysicsParams,
    comm_mask: &ZoneMask,
    fading: Fading,
    rng: &mut R,
) -> Vec<f64> {
    jammers
        .iter()
        .map(|j| {
            let d_mj = horizontal_distance(grid, uav_cell, j.cell);
            let g = jammer_gain(d_mj, j.beamwidth, physics.altitude, j.iso_gain)
                .expect("beamwidth validated at load");
            if g == 0.0 {
                return 0.0;
            }
            let los = is_los(uav_cell, j.cell, comm_mask);
            let d = link_distance(grid, uav_cell, j.cell, physics.altitude);
            let shadow = sample_shadow(los, physics, fading, rng);
            let h = gain_from_loss(path_loss_db(d, los, shadow, physics).expect("altitude > 0"));
            j.power * g * h
        })
        .collect()
}

pub fn interference_w<R: Rng + ?Sized>(
    uav_cell: Cell,
    jammers: &[RealizedJammer],
    grid: &GridSpec,
    physics: &PhysicsParams,
    comm_mask: &ZoneMask,
    fading: Fading,
    rng: &mut R,
) -> f64 {
    jammer_terms(uav_cell, jammers, grid, physics, comm_mask, fading, rng)
        .iter()
        .sum()
}

pub fn sinr(inputs: &SinrInputs) -> f64 {
    inputs.tx_power * inputs.gain / (inputs.bw * inputs.noise_psd + inputs.total_interference())
}

/// One realization of the perturbations used by [`robust_sinr`].
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// dB loss on the desired link.
    pub eps_desired: f64,
    /// dB gain on each interference link.
    pub eps_jammers: Vec<f64>,
    /// Residual-interference coefficient.
    pub residual: f64,
}

impl Perturbation {
    pub fn none(jammers: usize) -> Self {
        Perturbation {
            eps_desired: 0.0,
            eps_jammers: vec![0.0; jammers],
            residual: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rob: &RobustParams, jammers: usize, rng: &mut R) -> Self {
        let uniform = |rng: &mut R| {
            if rob.delta_csi > 0.0 {
                rng.random_range(0.0..rob.delta_csi)
            } else {
                0.0
            }
        };
        let eps_desired = uniform(rng);
        let eps_jammers = (0..jammers).map(|_| uniform(rng)).collect();
        let residual = if rob.delta_inf > 0.0 {
            Exp::new(1.0 / rob.delta_inf).expect("positive rate").sample(rng)
        } else {
            0.0
        };
        Perturbation {
            eps_desired,
            eps_jammers,
            residual,
        }
    }
}

/// SINR under a given perturbation realization.
pub fn perturbed_sinr(inputs: &SinrInputs, pert: &Perturbation) -> f64 {
    let signal = inputs.tx_power * inputs.gain * 10f64.powf(-pert.eps_desired / 10.0);
    let interference: f64 = inputs
        .interference
        .iter()
        .zip(&pert.eps_jammers)
        .map(|(i, e)| i * 10f64.powf(e / 10.0))
        .sum();
    signal / ((1.0 + pert.residual) * inputs.bw * inputs.noise_psd + interference)
}

pub fn robust_sinr<R: Rng + ?Sized>(inputs: &SinrInputs, rob: &RobustParams, rng: &mut R) -> f64 {
    let pert = Perturbation::sample(rob, inputs.interference.len(), rng);
    perturbed_sinr(inputs, &pert)
}

/// Shannon rate in bit/s; zero bandwidth gives zero rate.
pub fn rate_bps(bw: f64, sinr: f64) -> f64 {
    if bw <= 0.0 {
        0.0
    } else {
        bw * (1.0 + sinr).log2()
    }
}
