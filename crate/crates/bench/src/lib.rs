//! Fixtures shared by the criterion benches.

use uavnet_core::pso::PsoConfig;
use uavnet_core::scenario::bundled;
use uavnet_core::{FitnessContext, Scenario};

/// A search early in the second relay's explore on `paper_scale_1`, with
/// every obstacle of the map in context.
pub struct SearchFixture {
    pub scenario: Scenario,
    pub ctx: FitnessContext,
    pub pso: PsoConfig,
}

pub fn paper_scale_search(seed: u64) -> SearchFixture {
    let scenario = bundled("paper_scale_1").expect("bundled scenario");
    let current = nalgebra::Point3::new(320.0, 240.0, 330.0);
    let ctx = FitnessContext {
        current,
        previous_node: nalgebra::Point3::new(246.0, 166.0, 330.0),
        target: scenario.destination,
        obstacles: scenario.environment.obstacles().to_vec(),
        params: scenario.uav,
        weights: scenario.weights,
        leg_start: None,
    };
    let pso = scenario.pso.with_seed(seed);
    SearchFixture { scenario, ctx, pso }
}
