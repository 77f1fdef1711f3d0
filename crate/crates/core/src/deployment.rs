//! Sequential relay deployment: the per-UAV state machine and the lockstep
//! world loop that dispatches UAVs one at a time until the chain reaches
//! the destination.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::behavior::{arrived, compose_velocity, sense_neighbor, sense_obstacle, BehaviorInputs};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::fitness::{leg_is_clear, Cost};
use crate::pso::{next_explore_step, ExploreSetup, ExploreStep};
use crate::scenario::Scenario;
use crate::vehicle::{step, UavParams, UavState};

/// Spacing of idle UAVs parked behind the base.
pub const PARKING_SPACING: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub enum UavPhase {
    Unassigned,
    /// Transit along established waypoints toward the last relay node.
    Assigned {
        route: Vec<Point3<f64>>,
        cursor: usize,
    },
    Explore(ExploreState),
    Occupied {
        position: Point3<f64>,
        at_destination: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreState {
    /// Route node this explorer must stay linked to.
    pub anchor: Point3<f64>,
    /// Nominal point the next search is centered on.
    pub search_center: Point3<f64>,
    pub intermediates: Vec<Point3<f64>>,
    /// Leg currently being flown.
    pub leg: Option<Point3<f64>>,
    pub leg_is_destination: bool,
    pub searches: u32,
    /// Actual start of the first leg: the transit point beside the anchor.
    pub first_leg_start: Option<Point3<f64>>,
}

impl UavPhase {
    pub fn name(&self) -> &'static str {
        match self {
            UavPhase::Unassigned => "unassigned",
            UavPhase::Assigned { .. } => "assigned",
            UavPhase::Explore(_) => "explore",
            UavPhase::Occupied { .. } => "occupied",
        }
    }

    /// Position in the one-way order unassigned, assigned, explore, occupied.
    pub fn rank(&self) -> u8 {
        match self {
            UavPhase::Unassigned => 0,
            UavPhase::Assigned { .. } => 1,
            UavPhase::Explore(_) => 2,
            UavPhase::Occupied { .. } => 3,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, UavPhase::Assigned { .. } | UavPhase::Explore(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "uav_id")]
pub enum NodeKind {
    Base,
    Uav(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteNode {
    #[serde(flatten)]
    pub kind: NodeKind,
    pub position: Point3<f64>,
}

/// Relay chain in deployment order, starting at the base.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RouteGraph {
    pub nodes: Vec<RouteNode>,
    /// `links[k]` joins `nodes[k]` and `nodes[k + 1]`.
    pub links: Vec<f64>,
    pub reaches_destination: bool,
}

impl RouteGraph {
    fn with_base(base: Point3<f64>) -> Self {
        RouteGraph {
            nodes: vec![RouteNode { kind: NodeKind::Base, position: base }],
            links: Vec::new(),
            reaches_destination: false,
        }
    }

    fn push(&mut self, uav_id: u32, position: Point3<f64>) {
        let prev = self.last();
        self.links.push((position - prev).norm());
        self.nodes.push(RouteNode { kind: NodeKind::Uav(uav_id), position });
    }

    pub fn last(&self) -> Point3<f64> {
        self.nodes.last().map(|n| n.position).expect("route always holds the base")
    }

    pub fn uav_nodes(&self) -> impl Iterator<Item = (u32, Point3<f64>)> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Uav(id) => Some((id, n.position)),
            NodeKind::Base => None,
        })
    }

    pub fn max_link(&self) -> f64 {
        self.links.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub tick: u64,
    pub dt: f64,
}

impl SimClock {
    pub fn elapsed(&self) -> f64 {
        self.tick as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", content = "payload")]
pub enum EventKind {
    /// "Your turn": a relay node (or the base) invites the next UAV.
    Dispatch {
        position: Point3<f64>,
    },
    Assigned {
        route: Vec<Point3<f64>>,
    },
    WaypointReached {
        cursor: usize,
        position: Point3<f64>,
    },
    ExploreStarted {
        anchor: Point3<f64>,
    },
    Search {
        index: u32,
        center: Point3<f64>,
        result: Point3<f64>,
        cost: Cost,
        taken: bool,
    },
    LegReached {
        position: Point3<f64>,
    },
    Occupied {
        position: Point3<f64>,
        at_destination: bool,
    },
    RouteComplete {
        uav_count: usize,
    },
    Failure {
        reason: String,
    },
    Timeout {
        ticks: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub uav_id: Option<u32>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub uav_id: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
    pub phase: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub uav_id: u32,
    pub index: u32,
    pub center: Point3<f64>,
    pub result: Point3<f64>,
    pub cost: Cost,
    pub taken: bool,
    pub trace: Vec<Cost>,
    /// Wall-clock time of the optimizer call. Never serialized, so saved
    /// results stay reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum RunStatus {
    Complete,
    Failure(String),
    Timeout,
}

/// Per-UAV bookkeeping the metrics need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UavLedger {
    pub dispatch_tick: Option<u64>,
    pub occupied_tick: Option<u64>,
    pub intermediates: Vec<Point3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentRun {
    pub status: RunStatus,
    pub route: RouteGraph,
    pub trajectory: Vec<TrajectoryRow>,
    pub events: Vec<Event>,
    pub searches: Vec<SearchRecord>,
    pub ledgers: Vec<UavLedger>,
    pub clock: SimClock,
    pub master_seed: u64,
}

impl DeploymentRun {
    pub fn uav_count(&self) -> usize {
        self.route.nodes.len() - 1
    }
}

/// Read-only view of the world that every agent sees during one tick.
pub struct WorldSnapshot<'a> {
    pub states: &'a [UavState],
    pub route: &'a RouteGraph,
    pub scenario: &'a Scenario,
    pub master_seed: u64,
    pub tick: u64,
}

/// What an agent asks the world to do after its tick.
#[derive(Debug, Default)]
pub struct TickOutput {
    pub velocity: Vector3<f64>,
    pub events: Vec<EventKind>,
    pub search: Option<SearchRecord>,
    pub new_node: Option<(Point3<f64>, bool)>,
    pub failure: Option<String>,
}

/// Transit waypoints: the base, then a point `clearance` meters beside
/// every relay node. Side points are tried left, right, then around the
/// node; one with a clear straight leg from the previous waypoint wins,
/// otherwise the first that is merely clear of obstacles.
pub fn transit_waypoints(
    base: Point3<f64>,
    nodes: &[Point3<f64>],
    env: &Environment,
    params: &UavParams,
    clearance: f64,
) -> Vec<Point3<f64>> {
    let mut out = vec![base];
    let mut prev = base;
    for node in nodes {
        let d = Vector2::new(node.x - prev.x, node.y - prev.y);
        let heading = if d.norm() > 0.0 { d.y.atan2(d.x) } else { 0.0 };
        let candidates: Vec<Point3<f64>> = [90.0f64, -90.0, 135.0, -135.0, 180.0, 45.0, -45.0, 0.0]
            .iter()
            .filter_map(|deg| {
                let a = heading + deg.to_radians();
                let mut p = node + Vector3::new(a.cos(), a.sin(), 0.0) * clearance;
                let g = env.ground_height(p.xy()).ok()?;
                p.z = p.z.max(g + params.altitude_min);
                let clear = env
                    .obstacles()
                    .iter()
                    .all(|o| !o.spans(p.z) || o.boundary_distance(p.xy()) > params.size_d + params.safe_margin);
                (env.bounds().contains(&p) && clear).then_some(p)
            })
            .collect();
        let p = candidates
            .iter()
            .find(|p| leg_is_clear(&prev, p, env.obstacles(), params.size_d))
            .or(candidates.first())
            .copied()
            .unwrap_or_else(|| {
                let a = heading + std::f64::consts::PI;
                node + Vector3::new(a.cos(), a.sin(), 0.0) * clearance
            });
        out.push(p);
        prev = p;
    }
    out
}

/// Parking spot of idle UAV `id`: a line behind the base, away from the destination.
pub fn parking_position(
    id: u32,
    base: Point3<f64>,
    destination: Point3<f64>,
    env: &Environment,
    params: &UavParams,
) -> Point3<f64> {
    let d = Vector2::new(destination.x - base.x, destination.y - base.y);
    let dir = if d.norm() > 0.0 { d.normalize() } else { Vector2::new(1.0, 0.0) };
    let offset = PARKING_SPACING * f64::from(id + 1);
    let mut p = env.bounds().clamp(&Point3::new(base.x - dir.x * offset, base.y - dir.y * offset, base.z));
    if let Ok(g) = env.ground_height(p.xy()) {
        p.z = p.z.max(g + params.altitude_min);
    }
    p
}

fn controller_inputs(state: &UavState, target: Point3<f64>, world: &WorldSnapshot<'_>) -> BehaviorInputs {
    let sc = world.scenario;
    BehaviorInputs {
        state: *state,
        target,
        nearest_obstacle: sense_obstacle(&sc.environment, &state.position, sc.uav.sense_range),
        nearest_uav: sense_neighbor(state, world.states, sc.uav.sense_range),
        ground_height: sc.environment.ground_height(state.position.xy()).ok(),
    }
}

fn hold(state: &UavState, target: Point3<f64>, world: &WorldSnapshot<'_>) -> Vector3<f64> {
    let sc = world.scenario;
    let mut inputs = controller_inputs(state, target, world);
    inputs.nearest_obstacle = None;
    inputs.nearest_uav = None;
    compose_velocity(&inputs, &sc.behavior, &sc.uav)
}

fn fly(state: &UavState, target: Point3<f64>, world: &WorldSnapshot<'_>) -> Vector3<f64> {
    let sc = world.scenario;
    compose_velocity(&controller_inputs(state, target, world), &sc.behavior, &sc.uav)
}

/// Advances one UAV by one tick against a frozen snapshot.
pub fn tick_uav(phase: &mut UavPhase, state: &UavState, world: &WorldSnapshot<'_>) -> TickOutput {
    let sc = world.scenario;
    let mut out = TickOutput::default();
    match phase {
        UavPhase::Unassigned => {}
        UavPhase::Assigned { route, cursor } => {
            let wp = route[*cursor];
            if arrived(&state.position, &wp, &sc.uav) {
                out.events.push(EventKind::WaypointReached { cursor: *cursor, position: wp });
                if *cursor + 1 < route.len() {
                    *cursor += 1;
                    out.velocity = fly(state, route[*cursor], world);
                } else {
                    let anchor = world.route.last();
                    out.events.push(EventKind::ExploreStarted { anchor });
                    *phase = UavPhase::Explore(ExploreState {
                        anchor,
                        search_center: anchor,
                        intermediates: Vec::new(),
                        leg: None,
                        leg_is_destination: false,
                        searches: 0,
                        first_leg_start: Some(wp),
                    });
                    out.velocity = hold(state, wp, world);
                }
            } else {
                out.velocity = fly(state, wp, world);
            }
        }
        UavPhase::Explore(ex) => match ex.leg {
            Some(target) => {
                if arrived(&state.position, &target, &sc.uav) {
                    out.events.push(EventKind::LegReached { position: target });
                    ex.leg = None;
                    ex.search_center = target;
                    ex.first_leg_start = None;
                    if ex.leg_is_destination {
                        out.new_node = Some((target, true));
                        out.events.push(EventKind::Occupied { position: target, at_destination: true });
                        *phase = UavPhase::Occupied { position: target, at_destination: true };
                    }
                    out.velocity = hold(state, target, world);
                } else {
                    out.velocity = fly(state, target, world);
                }
            }
            None => explore_decide(phase, state, world, &mut out),
        },
        UavPhase::Occupied { position, at_destination: _ } => {
            out.velocity = hold(state, *position, world);
        }
    }
    out
}

fn explore_decide(phase: &mut UavPhase, state: &UavState, world: &WorldSnapshot<'_>, out: &mut TickOutput) {
    let sc = world.scenario;
    let UavPhase::Explore(ex) = phase else { return };
    let pso = sc.pso.with_seed(world.master_seed);
    let setup = ExploreSetup {
        anchor: ex.anchor,
        target: sc.destination,
        env: &sc.environment,
        params: &sc.uav,
        weights: &sc.weights,
        pso: &pso,
        explore: &sc.explore,
        uav_id: state.id,
    };
    let started = Instant::now();
    let decision =
        next_explore_step(&setup, &ex.search_center, ex.first_leg_start.as_ref(), ex.intermediates.len(), ex.searches);
    let wall_time = started.elapsed();
    let center = ex.search_center;
    let record = |search: &crate::pso::SearchOutcome, taken: bool, ex: &mut ExploreState, out: &mut TickOutput| {
        out.events.push(EventKind::Search {
            index: ex.searches,
            center,
            result: search.position,
            cost: search.cost,
            taken,
        });
        out.search = Some(SearchRecord {
            uav_id: state.id,
            index: ex.searches,
            center,
            result: search.position,
            cost: search.cost,
            taken,
            trace: search.trace.clone(),
            wall_time,
        });
        ex.searches += 1;
    };
    match decision {
        Ok(ExploreStep::Leg { point, search, .. }) => {
            record(&search, true, ex, out);
            ex.intermediates.push(point);
            ex.leg = Some(point);
            out.velocity = fly(state, point, world);
        }
        Ok(ExploreStep::Destination { point }) => {
            ex.intermediates.push(point);
            ex.leg = Some(point);
            ex.leg_is_destination = true;
            out.velocity = fly(state, point, world);
        }
        Ok(ExploreStep::Boundary { search }) => {
            if let Some(s) = &search {
                record(s, false, ex, out);
            }
            if ex.intermediates.is_empty() {
                out.failure = Some(format!("uav {} made no progress from {:?}", state.id, ex.anchor));
                return;
            }
            let node = ex.search_center;
            out.new_node = Some((node, false));
            out.events.push(EventKind::Occupied { position: node, at_destination: false });
            out.events.push(EventKind::Dispatch { position: node });
            *phase = UavPhase::Occupied { position: node, at_destination: false };
            out.velocity = hold(state, node, world);
        }
        Err(e) => {
            out.failure = Some(format!("uav {} search failed near {:?}: {e}", state.id, center));
        }
    }
}

/// Runs the whole deployment. Errors only on invalid input; blocked or
/// overlong runs come back as `Failure` or `Timeout`.
pub fn run_deployment(sc: &Scenario, master_seed: u64) -> Result<DeploymentRun> {
    sc.validate()?;
    let env = &sc.environment;
    let n = sc.uav_budget as usize;
    let heading = (sc.destination.y - sc.base.y).atan2(sc.destination.x - sc.base.x);
    let mut states: Vec<UavState> = (0..sc.uav_budget)
        .map(|id| UavState::at_rest(id, parking_position(id, sc.base, sc.destination, env, &sc.uav), heading))
        .collect();
    let mut phases = vec![UavPhase::Unassigned; n];
    let mut ledgers = vec![UavLedger::default(); n];
    let mut route = RouteGraph::with_base(sc.base);
    let mut events = Vec::new();
    let mut searches = Vec::new();
    let mut trajectory = Vec::with_capacity(n * 4096);
    let mut clock = SimClock { tick: 0, dt: sc.dt };
    // Dispatch messages waiting for delivery, with the tick they were sent.
    let mut pending: VecDeque<u64> = VecDeque::new();

    let record_rows = |tick: u64, states: &[UavState], phases: &[UavPhase], trajectory: &mut Vec<TrajectoryRow>| {
        for (s, ph) in states.iter().zip(phases) {
            trajectory.push(TrajectoryRow {
                tick,
                uav_id: s.id,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                psi: s.heading,
                phase: ph.name(),
            });
        }
    };
    record_rows(0, &states, &phases, &mut trajectory);

    events.push(Event { tick: 0, uav_id: None, kind: EventKind::Dispatch { position: sc.base } });
    pending.push_back(0);

    let mut status = None;
    while status.is_none() {
        if clock.tick >= sc.tick_budget {
            events.push(Event { tick: clock.tick, uav_id: None, kind: EventKind::Timeout { ticks: clock.tick } });
            status = Some(RunStatus::Timeout);
            break;
        }
        let tick = clock.tick;
        while pending.front().is_some_and(|&sent| sent < tick) {
            pending.pop_front();
            match phases.iter().position(|p| matches!(p, UavPhase::Unassigned)) {
                Some(k) => {
                    let relay_nodes: Vec<Point3<f64>> = route.uav_nodes().map(|(_, p)| p).collect();
                    let clearance = sc.behavior.b_adr + 2.0 * sc.uav.size_d;
                    let wps = transit_waypoints(sc.base, &relay_nodes, env, &sc.uav, clearance);
                    events.push(Event {
                        tick,
                        uav_id: Some(k as u32),
                        kind: EventKind::Assigned { route: wps.clone() },
                    });
                    phases[k] = UavPhase::Assigned { route: wps, cursor: 0 };
                    ledgers[k].dispatch_tick = Some(tick);
                }
                None => {
                    let reason = format!("uav budget of {} exhausted before reaching the destination", sc.uav_budget);
                    events.push(Event { tick, uav_id: None, kind: EventKind::Failure { reason: reason.clone() } });
                    status = Some(RunStatus::Failure(reason));
                }
            }
        }
        if status.is_some() {
            break;
        }

        let snapshot_states = states.clone();
        let snapshot_route = route.clone();
        let world = WorldSnapshot { states: &snapshot_states, route: &snapshot_route, scenario: sc, master_seed, tick };
        let mut velocities = vec![Vector3::zeros(); n];
        for k in 0..n {
            let out = tick_uav(&mut phases[k], &snapshot_states[k], &world);
            velocities[k] = out.velocity;
            let id = Some(k as u32);
            for kind in out.events {
                if matches!(kind, EventKind::Dispatch { .. }) {
                    pending.push_back(tick);
                }
                events.push(Event { tick, uav_id: id, kind });
            }
            if let Some(s) = out.search {
                searches.push(s);
            }
            if let UavPhase::Explore(ex) = &phases[k] {
                ledgers[k].intermediates.clone_from(&ex.intermediates);
            }
            if let Some((p, at_destination)) = out.new_node {
                route.push(k as u32, p);
                ledgers[k].occupied_tick = Some(tick);
                if at_destination {
                    route.reaches_destination = true;
                    events.push(Event {
                        tick,
                        uav_id: None,
                        kind: EventKind::RouteComplete { uav_count: route.nodes.len() - 1 },
                    });
                    status = Some(RunStatus::Complete);
                }
            }
            if let Some(reason) = out.failure {
                events.push(Event { tick, uav_id: id, kind: EventKind::Failure { reason: reason.clone() } });
                status = Some(RunStatus::Failure(reason));
            }
        }
        for (s, v) in states.iter_mut().zip(&velocities) {
            *s = step(s, *v, sc.dt).map_err(|e| Error::Domain(format!("tick {tick}: {e}")))?;
        }
        clock.tick += 1;
        record_rows(clock.tick, &states, &phases, &mut trajectory);
    }

    Ok(DeploymentRun {
        status: status.expect("loop exits with a status"),
        route,
        trajectory,
        events,
        searches,
        ledgers,
        clock,
        master_seed,
    })
}
