//! Scenario-based highway driving workbench: critical scenario generation,
//! a hierarchical maneuver-executing ego vehicle behind a safety shield, and
//! small actor-critic agents trained and evaluated against it.

pub mod agents;
pub mod env;
pub mod error;
pub mod eval;
pub mod factory;
pub mod pilot;
pub mod protocol;
pub mod road;
pub mod scenario;
pub mod shield;
pub mod sim;

pub use env::{ActionMode, DrivingEnv, EnvConfig, Observation, StepOutcome};
pub use error::{Error, Result};
pub use pilot::{HighLevelAction, Lateral, Longitudinal};
pub use road::{RoadNetwork, VehicleParams, VehicleState};
pub use scenario::{Scenario, ScenarioKind};
pub use sim::TerminationReason;
