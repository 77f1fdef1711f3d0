//! Relay-chain deployment of UAVs: particle swarm placement search and
//! behavior-based flight control.

pub mod behavior;
pub mod deployment;
pub mod environment;
pub mod error;
pub mod fitness;
pub mod io;
pub mod metrics;
pub mod pso;
pub mod rng;
pub mod scenario;
pub mod vehicle;
pub mod verify;

pub use behavior::BehaviorGains;
pub use deployment::{run_deployment, DeploymentRun, RouteGraph, RunStatus};
pub use environment::{Bounds, Disk, Environment, Obstacle, Terrain};
pub use error::{Error, Result};
pub use fitness::{Cost, FitnessContext, FitnessWeights};
pub use metrics::{compute_metrics, Metrics};
pub use pso::{ExploreConfig, PsoConfig, SearchOutcome};
pub use scenario::Scenario;
pub use vehicle::{UavParams, UavState};
pub use verify::{verify_dir, VerifyReport};
