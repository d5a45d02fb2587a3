//! Rotary-wing propulsion power and the normalized per-period energy cost.
//!
//! Communication energy is ignored; a period costs the hover power when the
//! UAV stays put and the forward-flight power at cruise speed when it moves,
//! both divided by the hover power.

use crate::scenario::RotorParams;
use crate::{Error, Result};

/// Propulsion power (W) at forward speed `v` (m/s).
pub fn propulsion_power_w(v: f64, p: &RotorParams) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::Domain(format!("speed must be >= 0, got {v}")));
    }
    let v2 = v * v;
    let v0_2 = p.v0 * p.v0;
    let blade = p.p0 * (1.0 + 3.0 * v2 / (p.u_tip * p.u_tip));
    let induced_inner = (1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)).sqrt() - v2 / (2.0 * v0_2);
    // the difference is positive but loses precision at high speed
    let induced = p.p1 * induced_inner.max(0.0).sqrt();
    let parasite = 0.5 * p.d0 * p.rho * p.s0 * p.a_r * v2 * v;
    Ok(blade + induced + parasite)
}

pub fn hover_power_w(p: &RotorParams) -> f64 {
    p.p0 + p.p1
}

/// Energy units for one flight period: 1 when hovering, P(v)/P(0) when moving.
pub fn normalized_step_cost(moving: bool, speed: f64, p: &RotorParams) -> Result<f64> {
    if !moving {
        return Ok(1.0);
    }
    Ok(propulsion_power_w(speed, p)? / propulsion_power_w(0.0, p)?)
}
