//! UAV particle model: parameters, state, and the discrete kinematic update.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and sensing parameters shared by every UAV in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavParams {
    /// Vehicle size `D` (m).
    pub size_d: f64,
    /// Safety margin `S` kept from obstacle boundaries (m).
    pub safe_margin: f64,
    /// Communication range `R_C` (m).
    pub comm_range: f64,
    /// Sensing range `R_S` (m).
    pub sense_range: f64,
    pub max_speed: f64,
    /// Minimum clearance above the terrain (m).
    pub altitude_min: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        let size_d = 1.0;
        Self {
            size_d,
            safe_margin: 10.0 * size_d,
            comm_range: 300.0,
            sense_range: 50.0,
            max_speed: 15.0,
            altitude_min: 2.0 * size_d,
        }
    }
}

impl UavParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("size_d", self.size_d),
            ("safe_margin", self.safe_margin),
            ("sense_range", self.sense_range),
            ("comm_range", self.comm_range),
            ("max_speed", self.max_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.altitude_min >= 0.0 && self.altitude_min.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "altitude_min must be non-negative, got {}",
                self.altitude_min
            )));
        }
        if self.sense_range >= self.comm_range {
            return Err(Error::InvalidParameter(format!(
                "sense_range ({}) must be smaller than comm_range ({})",
                self.sense_range, self.comm_range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub id: u32,
    pub position: Point3<f64>,
    /// Heading in (-pi, pi].
    pub heading: f64,
    pub velocity: Vector3<f64>,
}

impl UavState {
    pub fn at_rest(id: u32, position: Point3<f64>, heading: f64) -> Self {
        Self { id, position, heading: wrap_angle(heading), velocity: Vector3::zeros() }
    }
}

/// Advances `state` by one tick of length `dt` under velocity `v_cmd`.
///
/// Heading follows the horizontal velocity; when that component is zero the
/// previous heading is kept.
pub fn step(state: &UavState, v_cmd: Vector3<f64>, dt: f64) -> Result<UavState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !v_cmd.iter().all(|c| c.is_finite()) {
        return Err(Error::Domain(format!("non-finite velocity command {v_cmd:?}")));
    }
    let heading = if v_cmd.x != 0.0 || v_cmd.y != 0.0 { wrap_angle(v_cmd.y.atan2(v_cmd.x)) } else { state.heading };
    Ok(UavState { id: state.id, position: state.position + v_cmd * dt, heading, velocity: v_cmd })
}

/// Scales `v` down to `max_speed` if it is faster; direction is preserved.
pub fn clamp_speed(v: Vector3<f64>, max_speed: f64) -> Vector3<f64> {
    let n = v.norm();
    if n <= max_speed || n == 0.0 {
        v
    } else {
        v * (max_speed / n)
    }
}

/// Maps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}
