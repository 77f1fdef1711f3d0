//! Reactive flight controller: move-to-target plus obstacle and neighbor
//! avoidance, summed into one velocity command.

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::fitness::segment_point_distance;
use crate::vehicle::{clamp_speed, UavParams, UavState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorGains {
    pub a_m2g: f64,
    pub b_m2g: f64,
    pub a_ath: f64,
    pub b_ath: f64,
    pub a_adr: f64,
    pub b_adr: f64,
}

impl Default for BehaviorGains {
    fn default() -> Self {
        Self { a_m2g: 30.0, b_m2g: 20.0, a_ath: 30.0, b_ath: 15.0, a_adr: 30.0, b_adr: 20.0 }
    }
}

impl BehaviorGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_m2g", self.a_m2g),
            ("b_m2g", self.b_m2g),
            ("a_ath", self.a_ath),
            ("b_ath", self.b_ath),
            ("a_adr", self.a_adr),
            ("b_adr", self.b_adr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("behavior gain {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Nearest obstacle as seen by a UAV. `distance` is measured from the UAV
/// to the obstacle's boundary, not its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleSighting {
    pub center: Point2<f64>,
    pub radius: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborSighting {
    pub position: Point3<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorInputs {
    pub state: UavState,
    pub target: Point3<f64>,
    pub nearest_obstacle: Option<ObstacleSighting>,
    pub nearest_uav: Option<NeighborSighting>,
    /// Terrain elevation below the UAV, if known.
    pub ground_height: Option<f64>,
}

/// Unit vector toward the target and the distance to it. Zero vector at the target.
pub fn v_move_to_target(state: &UavState, target: &Point3<f64>) -> (Vector3<f64>, f64) {
    let delta = target - state.position;
    let d = delta.norm();
    if d == 0.0 {
        (Vector3::zeros(), 0.0)
    } else {
        (delta / d, d)
    }
}

pub fn gain_m2g(d: f64, gains: &BehaviorGains) -> f64 {
    if d >= gains.b_m2g {
        gains.a_m2g
    } else {
        gains.a_m2g * d / gains.b_m2g
    }
}

/// Horizontal unit vector perpendicular to the bearing toward the obstacle
/// center, turned to the side away from it: an obstacle on the right
/// (`rho > 0`) turns the UAV left. An obstacle dead ahead turns left.
pub fn v_avoid_obstacle(state: &UavState, center: Point2<f64>) -> Result<Vector3<f64>> {
    let bx = center.x - state.position.x;
    let by = center.y - state.position.y;
    let d = bx.hypot(by);
    if d == 0.0 {
        return Err(Error::Domain("UAV is at the obstacle center".into()));
    }
    let (bx, by) = (bx / d, by / d);
    let rho = bx * state.heading.sin() - by * state.heading.cos();
    let s = if rho < 0.0 { -1.0 } else { 1.0 };
    // Rotation about z by s * 90 degrees.
    Ok(Vector3::new(-s * by, s * bx, 0.0))
}

pub fn gain_ath(d: f64, gains: &BehaviorGains) -> f64 {
    if d >= gains.b_ath {
        0.0
    } else {
        gains.a_ath * (1.0 - d / gains.b_ath)
    }
}

/// Unit vector pointing from the neighbor to this UAV.
pub fn v_avoid_uav(state: &UavState, other: &Point3<f64>) -> Result<Vector3<f64>> {
    let delta = state.position - other;
    let d = delta.norm();
    if d == 0.0 {
        return Err(Error::Domain("UAV positions coincide".into()));
    }
    Ok(delta / d)
}

pub fn gain_adr(d: f64, gains: &BehaviorGains) -> f64 {
    if d >= gains.b_adr {
        0.0
    } else {
        gains.a_adr * (1.0 - d / gains.b_adr)
    }
}

/// Removes the share `fraction` of `v`'s component along unit `toward`,
/// only when `v` points toward the hazard.
fn suppress(v: Vector3<f64>, toward: Vector3<f64>, fraction: f64) -> Vector3<f64> {
    let along = v.dot(&toward);
    if along > 0.0 {
        v - toward * (along * fraction.clamp(0.0, 1.0))
    } else {
        v
    }
}

/// True when the straight horizontal path to the target passes within
/// `radius + size_d` of the obstacle center. A clear path is flown as is:
/// every point of it stays clear, so there is nothing to avoid, and a
/// target parked inside the avoidance band stays reachable.
pub fn blocks_path(obs: &ObstacleSighting, from: &Point3<f64>, target: &Point3<f64>, params: &UavParams) -> bool {
    segment_point_distance(from.xy(), target.xy(), obs.center) <= obs.radius + params.size_d
}

/// Weighted sum of the three behaviors, plus a climb term when below the
/// terrain clearance, clamped to `max_speed`. Obstacle avoidance only acts
/// on an obstacle that blocks the path to the target.
///
/// While an avoidance behavior is active, the part of the move-to-target
/// command that heads into the hazard is damped by that behavior's
/// relative gain, so the sum cannot push through the hazard.
pub fn compose_velocity(inputs: &BehaviorInputs, gains: &BehaviorGains, params: &UavParams) -> Vector3<f64> {
    let state = &inputs.state;
    let (dir, d_m2g) = v_move_to_target(state, &inputs.target);
    let mut m2g = dir * gain_m2g(d_m2g, gains);
    let mut avoid = Vector3::zeros();
    // Direction and strength of the nearest obstacle hazard, if any.
    let mut hazard: Option<(Vector3<f64>, f64)> = None;

    if let Some(obs) = &inputs.nearest_obstacle {
        let f = gain_ath(obs.distance, gains);
        let toward = Vector3::new(obs.center.x - state.position.x, obs.center.y - state.position.y, 0.0);
        if f > 0.0 && toward.norm() > 0.0 {
            let toward = toward.normalize();
            hazard = Some((toward, f / gains.a_ath));
            if blocks_path(obs, &state.position, &inputs.target, params) {
                if let Ok(v) = v_avoid_obstacle(state, obs.center) {
                    m2g = suppress(m2g, toward, f / gains.a_ath);
                    avoid += v * f;
                }
            }
        }
    }
    if let Some(n) = &inputs.nearest_uav {
        let f = gain_adr(n.distance, gains);
        if f > 0.0 {
            if let Ok(v) = v_avoid_uav(state, &n.position) {
                m2g = suppress(m2g, -v, f / gains.a_adr);
                let mut push = v * f;
                // Being pushed off a neighbor must not push the UAV into an obstacle.
                if let Some((toward, fraction)) = hazard {
                    push = suppress(push, toward, fraction);
                }
                avoid += push;
            }
        }
    }

    let mut v = m2g + avoid;
    if let Some(g) = inputs.ground_height {
        let deficit = g + params.altitude_min - state.position.z;
        if deficit > 0.0 {
            v.z += gains.a_m2g / gains.b_m2g * deficit;
        }
    }
    clamp_speed(v, params.max_speed)
}

/// True once the UAV is closer than one body size to its target.
pub fn arrived(position: &Point3<f64>, target: &Point3<f64>, params: &UavParams) -> bool {
    (target - position).norm() < params.size_d
}

/// Nearest obstacle spanning the UAV's altitude within `range` of its
/// boundary. Ties go to the lowest id.
pub fn sense_obstacle(env: &Environment, p: &Point3<f64>, range: f64) -> Option<ObstacleSighting> {
    let mut best: Option<ObstacleSighting> = None;
    for o in env.detect_obstacles(p, range) {
        let d = o.boundary_distance(p.xy());
        if best.is_none_or(|b| d < b.distance) {
            best = Some(ObstacleSighting { center: o.center, radius: o.radius, distance: d });
        }
    }
    best
}

/// Nearest other UAV within `range`. Ties go to the lowest id.
pub fn sense_neighbor(me: &UavState, others: &[UavState], range: f64) -> Option<NeighborSighting> {
    let mut best: Option<(u32, NeighborSighting)> = None;
    for o in others.iter().filter(|o| o.id != me.id) {
        let d = (o.position - me.position).norm();
        if d > range {
            continue;
        }
        let better = match &best {
            None => true,
            Some((id, b)) => d < b.distance || (d == b.distance && o.id < *id),
        };
        if better {
            best = Some((o.id, NeighborSighting { position: o.position, distance: d }));
        }
    }
    best.map(|(_, s)| s)
}
