//! Independent re-check of a finished run: route links, obstacle
//! clearance, UAV separation and terrain clearance, from positions alone.

use std::fs;
use std::path::Path;

use nalgebra::Point3;
use serde::Serialize;

use crate::deployment::{DeploymentRun, RunStatus};
use crate::environment::{Environment, Terrain};
use crate::error::{Error, Result};
use crate::io::{strip_comments, RouteFile, ROUTE_FILE, SCENARIO_FILE, TERRAIN_FILE, TRAJECTORY_FILE};
use crate::scenario::Scenario;

/// Slack for floating-point noise in the checks.
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub tick: u64,
    pub uav_id: u32,
    pub position: Point3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: &'static str,
    pub tick: Option<u64>,
    pub uav_id: Option<u32>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VerifyReport {
    pub samples: usize,
    pub links: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks samples (grouped by tick, in any UAV order) and route links.
pub fn check(
    samples: &[Sample],
    route_nodes: &[Point3<f64>],
    route_complete: bool,
    env: &Environment,
    scenario: &Scenario,
) -> VerifyReport {
    let p = &scenario.uav;
    let mut report = VerifyReport { samples: samples.len(), ..Default::default() };
    for (k, w) in route_nodes.windows(2).enumerate() {
        let d = (w[1] - w[0]).norm();
        report.links += 1;
        if d > p.comm_range + TOLERANCE {
            report.violations.push(Violation {
                kind: "link_range",
                tick: None,
                uav_id: None,
                detail: format!("link {k} is {d} m, above {}", p.comm_range),
            });
        }
    }
    if route_complete {
        let reached = route_nodes.last().is_some_and(|n| (n.xy() - scenario.destination.xy()).norm() <= TOLERANCE);
        if !reached {
            report.violations.push(Violation {
                kind: "route_incomplete",
                tick: None,
                uav_id: None,
                detail: "status is complete but the last node is not at the destination".into(),
            });
        }
    }
    let mut start = 0;
    while start < samples.len() {
        let tick = samples[start].tick;
        let end = start + samples[start..].iter().take_while(|s| s.tick == tick).count();
        let group = &samples[start..end];
        for (i, s) in group.iter().enumerate() {
            for o in env.obstacles() {
                let d = o.center_distance(s.position.xy());
                if o.spans(s.position.z) && d < o.radius + p.size_d - TOLERANCE {
                    report.violations.push(Violation {
                        kind: "obstacle_clearance",
                        tick: Some(tick),
                        uav_id: Some(s.uav_id),
                        detail: format!("{} m from center of {}, needs {}", d, o.id, o.radius + p.size_d),
                    });
                }
            }
            match env.ground_height(s.position.xy()) {
                Ok(g) if s.position.z < g + p.altitude_min - TOLERANCE => report.violations.push(Violation {
                    kind: "altitude",
                    tick: Some(tick),
                    uav_id: Some(s.uav_id),
                    detail: format!("z = {} below ground {} + {}", s.position.z, g, p.altitude_min),
                }),
                Ok(_) => {}
                Err(_) => report.violations.push(Violation {
                    kind: "out_of_terrain",
                    tick: Some(tick),
                    uav_id: Some(s.uav_id),
                    detail: format!("{:?} is outside the terrain grid", s.position),
                }),
            }
            for other in &group[i + 1..] {
                let d = (s.position - other.position).norm();
                if d < 2.0 * p.size_d - TOLERANCE {
                    report.violations.push(Violation {
                        kind: "separation",
                        tick: Some(tick),
                        uav_id: Some(s.uav_id),
                        detail: format!("{d} m from uav {}", other.uav_id),
                    });
                }
            }
        }
        start = end;
    }
    report
}

pub fn check_run(run: &DeploymentRun, scenario: &Scenario) -> VerifyReport {
    let samples: Vec<Sample> = run
        .trajectory
        .iter()
        .map(|r| Sample { tick: r.tick, uav_id: r.uav_id, position: Point3::new(r.x, r.y, r.z) })
        .collect();
    let nodes: Vec<Point3<f64>> = run.route.nodes.iter().map(|n| n.position).collect();
    check(&samples, &nodes, run.status == RunStatus::Complete, &scenario.environment, scenario)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_trajectory(text: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.starts_with("tick,") {
                continue;
            }
        }
        let bad = |m: &str| Error::Parse { location: format!("trajectory line {}", n + 1), message: m.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad("bad number"));
        out.push(Sample {
            tick: f[0].trim().parse().map_err(|_| bad("bad tick"))?,
            uav_id: f[1].trim().parse().map_err(|_| bad("bad uav_id"))?,
            position: Point3::new(num(2)?, num(3)?, num(4)?),
        });
    }
    out.sort_by_key(|s| (s.tick, s.uav_id));
    Ok(out)
}

/// Re-checks an output directory written by `io::write_outputs`.
pub fn verify_dir(dir: &Path) -> Result<VerifyReport> {
    let scenario = Scenario::from_toml(&strip_comments(&read(&dir.join(SCENARIO_FILE))?), Some(dir))?;
    let terrain = Terrain::parse(&read(&dir.join(TERRAIN_FILE))?)?;
    let env = Environment::new(terrain, scenario.environment.obstacles().to_vec(), *scenario.environment.bounds())?;
    let route: RouteFile = serde_json::from_str(&read(&dir.join(ROUTE_FILE))?)
        .map_err(|e| Error::Parse { location: ROUTE_FILE.into(), message: e.to_string() })?;
    let samples = parse_trajectory(&read(&dir.join(TRAJECTORY_FILE))?)?;
    let nodes: Vec<Point3<f64>> = route.route.nodes.iter().map(|n| n.position).collect();
    Ok(check(&samples, &nodes, route.status == RunStatus::Complete, &env, &scenario))
}
