//! Composite placement objective `F = b1*F1 + b2*F2 + b3*F3 + b4*F4`.
//!
//! * `F1` keeps the candidate clear of obstacle cross-sections,
//! * `F2` is the angle between the step and the bearing to the target,
//! * `F3` rewards steps of exactly the sensing range,
//! * `F4` rewards links of exactly the communication range to the previous node.
//!
//! World bounds, terrain clearance and leg clearance are hard constraints
//! evaluated before the weighted terms.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::environment::{Disk, Environment, Obstacle};
use crate::error::{Error, Result};
use crate::vehicle::UavParams;

/// Non-negative cost with a `+inf` sentinel for infeasible candidates.
/// Totally ordered, so swarm rankings never hit an incomparable pair.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cost(f64);

impl Cost {
    pub const ZERO: Cost = Cost(0.0);
    pub const INFINITY: Cost = Cost(f64::INFINITY);

    /// NaN maps to infinity; negative inputs are a logic error.
    pub fn new(v: f64) -> Cost {
        if v.is_nan() {
            return Cost::INFINITY;
        }
        debug_assert!(v >= 0.0, "negative cost {v}");
        Cost(v.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// `weight * self`, where a zero weight drops the term even if it is infinite.
    pub fn weighted(self, weight: f64) -> Cost {
        if weight == 0.0 {
            Cost::ZERO
        } else {
            Cost(weight * self.0)
        }
    }
}

impl fmt::Debug for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cost({})", self.0)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessWeights {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self { b1: 1.0, b2: 1.0, b3: 1.0, b4: 1.0 }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.b1, self.b2, self.b3, self.b4];
        if w.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidParameter(format!("weights must be finite and >= 0, got {w:?}")));
        }
        if w.iter().all(|b| *b == 0.0) {
            return Err(Error::InvalidParameter("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the objective needs for one search step.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessContext {
    /// Search center `P_i`.
    pub current: Point3<f64>,
    /// Previous route node `P_{i-1}`.
    pub previous_node: Point3<f64>,
    /// Destination `E`.
    pub target: Point3<f64>,
    /// Obstacles sensed from `current`; the cross-section used for a
    /// candidate is taken at the candidate's own altitude.
    pub obstacles: Vec<Obstacle>,
    pub params: UavParams,
    pub weights: FitnessWeights,
    /// Where the UAV will actually start the leg, when that is not
    /// `current`. Only the leg-clearance check uses it.
    pub leg_start: Option<Point3<f64>>,
}

/// Per-term breakdown, unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessTerms {
    pub f1: Cost,
    pub f2: Cost,
    pub f3: Cost,
    pub f4: Cost,
}

/// Obstacle clearance term, summed over disks. Infinite inside `R_k + D`,
/// linear inside the safety band `R_k + D + S`, zero beyond.
pub fn f1_obstacle(candidate: &Point3<f64>, obstacles: &[Disk], params: &UavParams) -> Cost {
    let xy = candidate.xy();
    obstacles
        .iter()
        .map(|disk| {
            let d = (xy - disk.center).norm();
            let collide = disk.radius + params.size_d;
            let band = collide + params.safe_margin;
            if d > band {
                Cost::ZERO
            } else if d > collide {
                Cost::new(band - d)
            } else {
                Cost::INFINITY
            }
        })
        .sum()
}

/// Angle in [0, pi] between `candidate - current` and `target - current`.
pub fn f2_target_angle(current: &Point3<f64>, candidate: &Point3<f64>, target: &Point3<f64>) -> Result<Cost> {
    let step = candidate - current;
    let bearing = target - current;
    if step.norm() == 0.0 {
        return Err(Error::Domain("candidate coincides with current position".into()));
    }
    if bearing.norm() == 0.0 {
        return Err(Error::Domain("target coincides with current position".into()));
    }
    Ok(Cost::new(step.cross(&bearing).norm().atan2(step.dot(&bearing))))
}

/// `|R_S - r|` for step length `r <= R_S`, infinite beyond.
pub fn f3_sensing(current: &Point3<f64>, candidate: &Point3<f64>, sense_range: f64) -> Cost {
    range_term((candidate - current).norm(), sense_range)
}

/// `|R_C - c|` for link length `c <= R_C` to the previous node, infinite beyond.
pub fn f4_communication(previous_node: &Point3<f64>, candidate: &Point3<f64>, comm_range: f64) -> Cost {
    range_term((candidate - previous_node).norm(), comm_range)
}

fn range_term(dist: f64, range: f64) -> Cost {
    if dist <= range {
        Cost::new((range - dist).abs())
    } else {
        Cost::INFINITY
    }
}

/// Hard feasibility: inside bounds, above terrain clearance, and the
/// straight leg from `ctx.current` stays outside every collision radius.
pub fn is_feasible(candidate: &Point3<f64>, ctx: &FitnessContext, env: &Environment) -> bool {
    if !env.bounds().contains(candidate) {
        return false;
    }
    match env.ground_height(candidate.xy()) {
        Ok(g) if candidate.z >= g + ctx.params.altitude_min => {}
        _ => return false,
    }
    let from = ctx.leg_start.unwrap_or(ctx.current);
    leg_is_clear(&from, candidate, &ctx.obstacles, ctx.params.size_d)
}

/// True when the segment `from -> to` keeps a horizontal distance greater
/// than `R_k + size` from every obstacle whose span overlaps the leg's
/// altitude band.
pub fn leg_is_clear(from: &Point3<f64>, to: &Point3<f64>, obstacles: &[Obstacle], size: f64) -> bool {
    let (lo, hi) = if from.z <= to.z { (from.z, to.z) } else { (to.z, from.z) };
    obstacles
        .iter()
        .filter(|o| o.overlaps_band(lo, hi))
        .all(|o| segment_point_distance(from.xy(), to.xy(), o.center) > o.radius + size)
}

/// Horizontal distance from `p` to the segment `a -> b`.
pub fn segment_point_distance(a: Point2<f64>, b: Point2<f64>, p: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Unweighted term values at `candidate`.
pub fn fitness_terms(candidate: &Point3<f64>, ctx: &FitnessContext) -> Result<FitnessTerms> {
    let disks: Vec<Disk> = ctx.obstacles.iter().filter(|o| o.spans(candidate.z)).map(Obstacle::disk).collect();
    Ok(FitnessTerms {
        f1: f1_obstacle(candidate, &disks, &ctx.params),
        f2: f2_target_angle(&ctx.current, candidate, &ctx.target)?,
        f3: f3_sensing(&ctx.current, candidate, ctx.params.sense_range),
        f4: f4_communication(&ctx.previous_node, candidate, ctx.params.comm_range),
    })
}

/// Weighted objective with hard constraints applied first.
pub fn total_fitness(candidate: &Point3<f64>, ctx: &FitnessContext, env: &Environment) -> Result<Cost> {
    if !is_feasible(candidate, ctx, env) {
        return Ok(Cost::INFINITY);
    }
    let t = fitness_terms(candidate, ctx)?;
    let w = &ctx.weights;
    Ok(t.f1.weighted(w.b1) + t.f2.weighted(w.b2) + t.f3.weighted(w.b3) + t.f4.weighted(w.b4))
}
