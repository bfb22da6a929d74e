//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use sad_sim_core::factory::{generate_kind, GenParams};
use sad_sim_core::scenario::{Scenario, ScenarioKind};

/// A reproducible critical scenario of the given kind.
pub fn scenario(kind: ScenarioKind, seed: u64) -> Arc<Scenario> {
    Arc::new(generate_kind(kind, &GenParams::with_seed(seed)).expect("default parameters generate"))
}
