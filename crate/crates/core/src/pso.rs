//! Particle swarm search over the sensing ball, and the explore loop that
//! chains search results out to the communication boundary.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{Bounds, Environment, Obstacle};
use crate::error::{Error, Result};
use crate::fitness::{leg_is_clear, total_fitness, Cost, FitnessContext, FitnessWeights};
use crate::rng::stream_seed;
use crate::vehicle::UavParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub population: usize,
    pub iter_max: usize,
    /// Inertia `w` at iteration 0.
    pub inertia: f64,
    /// Per-iteration multiplier applied to the inertia.
    pub inertia_damping: f64,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
    /// Particle speed limit per iteration, as a fraction of the search radius.
    pub velocity_max_fraction: f64,
    /// Full resamples attempted when every initial particle is infeasible.
    pub init_retries: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            population: 100,
            iter_max: 100,
            inertia: 1.0,
            inertia_damping: 0.98,
            c1: 1.5,
            c2: 1.5,
            seed: 0,
            velocity_max_fraction: 0.2,
            init_retries: 10,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidParameter("pso population must be >= 2".into()));
        }
        if self.iter_max < 1 {
            return Err(Error::InvalidParameter("pso iter_max must be >= 1".into()));
        }
        for (name, v) in
            [("inertia", self.inertia), ("inertia_damping", self.inertia_damping), ("c1", self.c1), ("c2", self.c2)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("pso {name} must be >= 0, got {v}")));
            }
        }
        if !(self.velocity_max_fraction > 0.0 && self.velocity_max_fraction.is_finite()) {
            return Err(Error::InvalidParameter("pso velocity_max_fraction must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn inertia_at(&self, iteration: usize) -> f64 {
        self.inertia * self.inertia_damping.powi(iteration as i32)
    }
}

/// Anything that scores a candidate position.
pub trait Objective {
    fn cost(&self, p: &Point3<f64>) -> Cost;
}

impl<F> Objective for F
where
    F: Fn(&Point3<f64>) -> Cost,
{
    fn cost(&self, p: &Point3<f64>) -> Cost {
        self(p)
    }
}

/// Placement objective for one search step. A candidate at the search
/// center has no defined target angle and is scored as infeasible.
pub struct PlacementObjective<'a> {
    pub ctx: &'a FitnessContext,
    pub env: &'a Environment,
}

impl Objective for PlacementObjective<'_> {
    fn cost(&self, p: &Point3<f64>) -> Cost {
        total_fitness(p, self.ctx, self.env).unwrap_or(Cost::INFINITY)
    }
}

/// Closed ball, optionally intersected with an axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBall {
    pub center: Point3<f64>,
    pub radius: f64,
    pub bounds: Option<Bounds>,
}

impl SearchBall {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (p - self.center).norm() <= self.radius * (1.0 + 1e-12) && self.bounds.as_ref().is_none_or(|b| b.contains(p))
    }

    /// Radial projection onto the ball, then coordinate clamp into the box.
    /// Both moves are toward the center, so the result stays in the ball
    /// whenever the center lies in the box.
    pub fn clamp(&self, p: Point3<f64>) -> Point3<f64> {
        let offset = p - self.center;
        let n = offset.norm();
        let p = if n > self.radius { self.center + offset * (self.radius / n) } else { p };
        match &self.bounds {
            Some(b) => b.clamp(&p),
            None => p,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3<f64> {
        let mut last = self.center;
        for _ in 0..1000 {
            let u = Vector3::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            if u.norm_squared() > 1.0 {
                continue;
            }
            let p = self.center + u * self.radius;
            if self.bounds.as_ref().is_none_or(|b| b.contains(&p)) {
                return p;
            }
            last = p;
        }
        self.clamp(last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Point3<f64>,
    pub velocity: Vector3<f64>,
    pub pbest_position: Point3<f64>,
    pub pbest_cost: Cost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub gbest_position: Point3<f64>,
    pub gbest_cost: Cost,
    rng: ChaCha8Rng,
}

impl Swarm {
    /// Builds a swarm from explicit particles; gbest follows the lowest index on ties.
    pub fn from_particles(particles: Vec<Particle>, seed: u64) -> Self {
        let mut swarm = Swarm {
            gbest_position: particles[0].pbest_position,
            gbest_cost: particles[0].pbest_cost,
            particles,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        swarm.refresh_gbest();
        swarm
    }

    fn refresh_gbest(&mut self) {
        for p in &self.particles {
            if p.pbest_cost < self.gbest_cost {
                self.gbest_cost = p.pbest_cost;
                self.gbest_position = p.pbest_position;
            }
        }
    }
}

/// Samples `population` particles uniformly in the ball with zero velocity.
/// Resamples up to `init_retries` times while every particle is infeasible.
pub fn init_swarm<O: Objective + ?Sized>(ball: &SearchBall, objective: &O, cfg: &PsoConfig) -> Result<Swarm> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let attempts = cfg.init_retries + 1;
    for _ in 0..attempts {
        let particles: Vec<Particle> = (0..cfg.population)
            .map(|_| {
                let position = ball.sample(&mut rng);
                Particle {
                    position,
                    velocity: Vector3::zeros(),
                    pbest_position: position,
                    pbest_cost: objective.cost(&position),
                }
            })
            .collect();
        if particles.iter().any(|p| p.pbest_cost.is_finite()) {
            let mut swarm = Swarm {
                gbest_position: particles[0].pbest_position,
                gbest_cost: particles[0].pbest_cost,
                particles,
                rng,
            };
            swarm.refresh_gbest();
            return Ok(swarm);
        }
    }
    Err(Error::NoFeasibleCandidate { attempts, x: ball.center.x, y: ball.center.y, z: ball.center.z })
}

/// One synchronous swarm update: every particle moves against the gbest
/// of the previous iteration, then pbest and gbest are refreshed in
/// particle-index order on strict improvement.
pub fn pso_step<O: Objective + ?Sized>(
    swarm: &mut Swarm,
    ball: &SearchBall,
    objective: &O,
    cfg: &PsoConfig,
    iteration: usize,
) {
    debug_assert!(iteration < cfg.iter_max);
    let w = cfg.inertia_at(iteration);
    let v_max = cfg.velocity_max_fraction * ball.radius;
    let gbest = swarm.gbest_position;
    for p in &mut swarm.particles {
        let r1: f64 = swarm.rng.gen();
        let r2: f64 = swarm.rng.gen();
        let v = p.velocity * w + (p.pbest_position - p.position) * (cfg.c1 * r1) + (gbest - p.position) * (cfg.c2 * r2);
        let speed = v.norm();
        p.velocity = if speed > v_max { v * (v_max / speed) } else { v };
        p.position = ball.clamp(p.position + p.velocity);
    }
    let costs: Vec<Cost> = swarm.particles.iter().map(|p| objective.cost(&p.position)).collect();
    for (p, c) in swarm.particles.iter_mut().zip(costs) {
        if c < p.pbest_cost {
            p.pbest_cost = c;
            p.pbest_position = p.position;
        }
    }
    swarm.refresh_gbest();
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub position: Point3<f64>,
    pub cost: Cost,
    /// gbest cost after each iteration; length `iter_max`.
    pub trace: Vec<Cost>,
    pub evaluations: usize,
}

/// `init_swarm` followed by `iter_max` steps.
pub fn run_search<O: Objective + ?Sized>(ball: &SearchBall, objective: &O, cfg: &PsoConfig) -> Result<SearchOutcome> {
    let mut swarm = init_swarm(ball, objective, cfg)?;
    let mut trace = Vec::with_capacity(cfg.iter_max);
    for it in 0..cfg.iter_max {
        pso_step(&mut swarm, ball, objective, cfg, it);
        trace.push(swarm.gbest_cost);
    }
    Ok(SearchOutcome {
        position: swarm.gbest_position,
        cost: swarm.gbest_cost,
        trace,
        evaluations: cfg.population * (cfg.iter_max + 1),
    })
}

/// Searches the sensing ball around `center` for the best next position.
pub fn search_optimal(
    center: &Point3<f64>,
    ctx: &FitnessContext,
    env: &Environment,
    cfg: &PsoConfig,
) -> Result<SearchOutcome> {
    let ball = SearchBall { center: *center, radius: ctx.params.sense_range, bounds: Some(*env.bounds()) };
    run_search(&ball, &PlacementObjective { ctx, env }, cfg)
}

/// Stop rules for the explore loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    /// A result farther than `R_C - boundary_margin` from the anchor ends
    /// the loop without being taken.
    pub boundary_margin: f64,
    /// Minimum outward gain (m) a result must add once the explorer is
    /// within one sensing range of the boundary. Below it the step mostly
    /// slides along the range limit instead of extending the link.
    pub min_progress: f64,
    /// Hard cap on legs per explore.
    pub max_legs: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self { boundary_margin: 0.0, min_progress: 25.0, max_legs: 24 }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_margin >= 0.0 && self.boundary_margin.is_finite()) {
            return Err(Error::InvalidParameter("boundary_margin must be >= 0".into()));
        }
        if !(self.min_progress >= 0.0 && self.min_progress.is_finite()) {
            return Err(Error::InvalidParameter("min_progress must be >= 0".into()));
        }
        if self.max_legs == 0 {
            return Err(Error::InvalidParameter("max_legs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inputs that stay fixed across one explore.
#[derive(Debug, Clone, Copy)]
pub struct ExploreSetup<'a> {
    pub anchor: Point3<f64>,
    pub target: Point3<f64>,
    pub env: &'a Environment,
    pub params: &'a UavParams,
    pub weights: &'a FitnessWeights,
    pub pso: &'a PsoConfig,
    pub explore: &'a ExploreConfig,
    pub uav_id: u32,
}

/// Decision for the next explore leg.
#[derive(Debug, Clone, PartialEq)]
pub enum ExploreStep {
    /// Fly to `point` and search again from there.
    Leg { point: Point3<f64>, search: SearchOutcome, center: Point3<f64> },
    /// The current point is the last in-range optimum. Carries the search
    /// whose result fell outside the link range, if one ran.
    Boundary { search: Option<SearchOutcome> },
    /// The destination is within sensing range; `point` is its approach point.
    Destination { point: Point3<f64> },
}

/// Destination lifted to the terrain clearance if needed.
pub fn approach_point(target: &Point3<f64>, env: &Environment, params: &UavParams) -> Point3<f64> {
    match env.ground_height(target.xy()) {
        Ok(g) if target.z < g + params.altitude_min => Point3::new(target.x, target.y, g + params.altitude_min),
        _ => *target,
    }
}

/// Decides what follows `current` after `legs_done` legs; runs one PSO
/// search (stream `search_index`) unless a stop rule fires first.
/// `leg_start` is where the UAV really is when it is not at `current`; the
/// next leg must be clear from there.
pub fn next_explore_step(
    setup: &ExploreSetup<'_>,
    current: &Point3<f64>,
    leg_start: Option<&Point3<f64>>,
    legs_done: usize,
    search_index: u32,
) -> Result<ExploreStep> {
    let p = setup.params;
    let mut obstacles: Vec<Obstacle> =
        setup.env.detect_obstacles(current, p.sense_range).into_iter().cloned().collect();
    if let Some(start) = leg_start {
        for o in setup.env.detect_obstacles(start, p.sense_range) {
            if !obstacles.iter().any(|k| k.id == o.id) {
                obstacles.push(o.clone());
            }
        }
    }
    let from = leg_start.unwrap_or(current);
    let approach = approach_point(&setup.target, setup.env, p);
    if (approach - current).norm() <= p.sense_range
        && (approach - setup.anchor).norm() <= p.comm_range
        && leg_is_clear(from, &approach, &obstacles, p.size_d)
    {
        return Ok(ExploreStep::Destination { point: approach });
    }
    let reach = (current - setup.anchor).norm();
    if legs_done >= setup.explore.max_legs || p.comm_range - reach <= p.size_d {
        return Ok(ExploreStep::Boundary { search: None });
    }
    let ctx = FitnessContext {
        current: *current,
        previous_node: setup.anchor,
        target: setup.target,
        obstacles,
        params: *p,
        weights: *setup.weights,
        leg_start: leg_start.copied(),
    };
    let cfg = setup.pso.with_seed(stream_seed(setup.pso.seed, setup.uav_id, search_index));
    let search = search_optimal(current, &ctx, setup.env, &cfg)?;
    let next_reach = (search.position - setup.anchor).norm();
    let near_rim = reach >= p.comm_range - p.sense_range;
    if next_reach > p.comm_range - setup.explore.boundary_margin
        || (near_rim && next_reach - reach < setup.explore.min_progress)
    {
        return Ok(ExploreStep::Boundary { search: Some(search) });
    }
    Ok(ExploreStep::Leg { point: search.position, search, center: *current })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOutcome {
    pub final_position: Point3<f64>,
    /// Every leg endpoint in order, including a destination approach point.
    pub intermediate_points: Vec<Point3<f64>>,
    pub destination_reached: bool,
    /// Set when a search failed; the points found so far are kept.
    pub failure: Option<Error>,
    pub traces: Vec<Vec<Cost>>,
}

impl ExploreOutcome {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Chains searches from `start` until the communication boundary of
/// `anchor` or the destination is reached, assuming each leg is flown
/// exactly. Search streams are numbered from 0.
pub fn explore_to_boundary(setup: &ExploreSetup<'_>, start: &Point3<f64>) -> ExploreOutcome {
    let mut current = *start;
    let mut out = ExploreOutcome {
        final_position: current,
        intermediate_points: Vec::new(),
        destination_reached: false,
        failure: None,
        traces: Vec::new(),
    };
    let mut search_index = 0u32;
    loop {
        match next_explore_step(setup, &current, None, out.intermediate_points.len(), search_index) {
            Ok(ExploreStep::Leg { point, search, .. }) => {
                search_index += 1;
                out.traces.push(search.trace);
                out.intermediate_points.push(point);
                current = point;
            }
            Ok(ExploreStep::Destination { point }) => {
                out.intermediate_points.push(point);
                out.destination_reached = true;
                current = point;
                break;
            }
            Ok(ExploreStep::Boundary { search }) => {
                out.traces.extend(search.map(|s| s.trace));
                break;
            }
            Err(e) => {
                out.failure = Some(e);
                break;
            }
        }
    }
    out.final_position = current;
    out
}
