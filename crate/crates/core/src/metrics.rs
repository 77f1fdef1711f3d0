//! Per-UAV deployment metrics against the ideal line-of-sight placement.

use std::time::Duration;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::deployment::{DeploymentRun, RouteGraph, RunStatus, UavLedger};
use crate::environment::Environment;
use crate::scenario::Scenario;
use crate::vehicle::{wrap_angle, UavParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavMetrics {
    pub uav_id: u32,
    pub position: Point3<f64>,
    pub ideal_position: Point3<f64>,
    /// Distance between `position` and `ideal_position`.
    pub deviation: f64,
    /// Horizontal part of `deviation`.
    pub horizontal_deviation: f64,
    /// Horizontal bearing of the link from the previous node, radians.
    pub target_angle: f64,
    /// Bearing of the base-to-destination line of sight, radians.
    pub ideal_target_angle: f64,
    /// Wrapped absolute difference of the two angles.
    pub angle_deviation: f64,
    pub link_length: f64,
    pub temporary_goals: usize,
    /// Simulated seconds from dispatch to occupying the node.
    pub deployment_time: f64,
    pub reaches_destination: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub status: RunStatus,
    pub uav_count: usize,
    pub ticks: u64,
    pub simulated_time: f64,
    pub searches: usize,
    pub rows: Vec<UavMetrics>,
    /// Mean over every link except the last one into the destination.
    pub mean_link_excluding_final: Option<f64>,
    pub max_link: Option<f64>,
    pub mean_deviation: Option<f64>,
    pub mean_angle_deviation: Option<f64>,
}

/// Ideal position of the `k`-th relay (1-based): `k * R_C` along the line
/// of sight, capped at the destination, at terrain clearance height.
pub fn ideal_position(
    k: usize,
    base: &Point3<f64>,
    destination: &Point3<f64>,
    env: &Environment,
    params: &UavParams,
) -> Point3<f64> {
    let los = destination - base;
    let len = los.norm();
    if len == 0.0 {
        return *base;
    }
    let s = (k as f64 * params.comm_range).min(len);
    let p = base + los * (s / len);
    let z = env.ground_height(p.xy()).map(|g| g + params.altitude_min).unwrap_or(p.z);
    Point3::new(p.x, p.y, z)
}

fn bearing(from: &Point3<f64>, to: &Point3<f64>) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Builds the per-UAV table from a route and the per-UAV ledgers.
pub fn compute_metrics_parts(
    route: &RouteGraph,
    ledgers: &[UavLedger],
    scenario: &Scenario,
    status: RunStatus,
    ticks: u64,
    searches: usize,
) -> Metrics {
    let ideal_angle = bearing(&scenario.base, &scenario.destination);
    let dt = scenario.dt;
    let n_uav = route.nodes.len().saturating_sub(1);
    let mut rows = Vec::with_capacity(n_uav);
    for (k, (node, link)) in route.nodes.iter().skip(1).zip(&route.links).enumerate() {
        let crate::deployment::NodeKind::Uav(id) = node.kind else { continue };
        let prev = route.nodes[k].position;
        let is_last = k + 1 == n_uav;
        let reaches = is_last && route.reaches_destination;
        let ideal = if reaches {
            scenario.destination
        } else {
            ideal_position(k + 1, &scenario.base, &scenario.destination, &scenario.environment, &scenario.uav)
        };
        let angle = bearing(&prev, &node.position);
        let ledger = ledgers.get(id as usize).cloned().unwrap_or_default();
        let deployment_time = match (ledger.dispatch_tick, ledger.occupied_tick) {
            (Some(a), Some(b)) => (b - a) as f64 * dt,
            _ => 0.0,
        };
        rows.push(UavMetrics {
            uav_id: id,
            position: node.position,
            ideal_position: ideal,
            deviation: (node.position - ideal).norm(),
            horizontal_deviation: (node.position.xy() - ideal.xy()).norm(),
            target_angle: angle,
            ideal_target_angle: ideal_angle,
            angle_deviation: wrap_angle(angle - ideal_angle).abs(),
            link_length: *link,
            temporary_goals: ledger.intermediates.len(),
            deployment_time,
            reaches_destination: reaches,
        });
    }
    let relay_links = if route.reaches_destination && !route.links.is_empty() {
        &route.links[..route.links.len() - 1]
    } else {
        &route.links[..]
    };
    Metrics {
        status,
        uav_count: rows.len(),
        ticks,
        simulated_time: ticks as f64 * dt,
        searches,
        mean_link_excluding_final: mean(relay_links.iter().copied()),
        max_link: route.links.iter().copied().reduce(f64::max),
        mean_deviation: mean(rows.iter().map(|r| r.deviation)),
        mean_angle_deviation: mean(rows.iter().map(|r| r.angle_deviation)),
        rows,
    }
}

pub fn compute_metrics(run: &DeploymentRun, scenario: &Scenario) -> Metrics {
    compute_metrics_parts(&run.route, &run.ledgers, scenario, run.status.clone(), run.clock.tick, run.searches.len())
}

/// Wall-clock search time per UAV, in id order.
pub fn searching_time(run: &DeploymentRun) -> Vec<(u32, Duration)> {
    let mut out: Vec<(u32, Duration)> = Vec::new();
    for s in &run.searches {
        match out.iter_mut().find(|(id, _)| *id == s.uav_id) {
            Some((_, t)) => *t += s.wall_time,
            None => out.push((s.uav_id, s.wall_time)),
        }
    }
    out.sort_by_key(|(id, _)| *id);
    out
}
