use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::a2c::{ActorCritic, HeadKind, SampledAction};
use crate::env::ActionMode;
use crate::error::{Error, Result};
use crate::pilot::{HighLevelAction, Lateral, Longitudinal};
use crate::road::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    Maintain,
    Random,
    A2cDiscrete,
    A2cContinuous,
}

impl PolicyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyTag::Maintain => "maintain",
            PolicyTag::Random => "random",
            PolicyTag::A2cDiscrete => "a2c_discrete",
            PolicyTag::A2cContinuous => "a2c_continuous",
        }
    }

    /// The only environment mode this policy can drive.
    pub fn mode(self) -> ActionMode {
        match self {
            PolicyTag::A2cContinuous => ActionMode::Continuous,
            _ => ActionMode::Hierarchical,
        }
    }

    pub fn head(self) -> Option<HeadKind> {
        match self {
            PolicyTag::A2cDiscrete => Some(HeadKind::Discrete),
            PolicyTag::A2cContinuous => Some(HeadKind::Gaussian),
            _ => None,
        }
    }
}

impl std::str::FromStr for PolicyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maintain" => Ok(PolicyTag::Maintain),
            "random" => Ok(PolicyTag::Random),
            "a2c" | "a2c_discrete" => Ok(PolicyTag::A2cDiscrete),
            "a2c_continuous" => Ok(PolicyTag::A2cContinuous),
            _ => Err(Error::param("policy", format!("unknown policy tag `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentAction {
    Discrete(HighLevelAction),
    Continuous { accel: f64, steer_rate: f64 },
}

/// Map a pre-squash Gaussian sample onto actuator commands: `tanh(u)` in
/// `[-1, 1]` scales acceleration by `a_max` or `|a_min|` and steering rate
/// by `vdelta_max`.
pub fn squash_to_controls(u: [f64; 2], params: &VehicleParams) -> (f64, f64) {
    let a = u[0].tanh();
    let s = u[1].tanh();
    let accel = if a >= 0.0 {
        a * params.a_max
    } else {
        a * params.a_min.abs()
    };
    (accel, s * params.vdelta_max)
}

pub fn to_agent_action(a: SampledAction, params: &VehicleParams) -> AgentAction {
    match a {
        SampledAction::Discrete { lat, lon } => AgentAction::Discrete(
            HighLevelAction::from_pair(lat, lon).expect("head sizes match option spaces"),
        ),
        SampledAction::Gaussian { u } => {
            let (accel, steer_rate) = squash_to_controls(u, params);
            AgentAction::Continuous { accel, steer_rate }
        }
    }
}

pub fn act_maintain(_obs: &[f64]) -> HighLevelAction {
    HighLevelAction::new(Lateral::Center, Longitudinal::Maintain)
}

/// Uniform over the 12 joint options.
pub fn act_random(_obs: &[f64], rng: &mut impl Rng) -> HighLevelAction {
    HighLevelAction::from_index(rng.gen_range(0..HighLevelAction::COUNT)).expect("index in range")
}

pub trait Policy: Send {
    fn tag(&self) -> PolicyTag;

    /// Called before each episode with a per-episode seed.
    fn begin_episode(&mut self, _seed: u64) {}

    fn act(&mut self, features: &[f64], params: &VehicleParams) -> AgentAction;
}

pub struct MaintainPolicy;

impl Policy for MaintainPolicy {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Maintain
    }

    fn act(&mut self, features: &[f64], _: &VehicleParams) -> AgentAction {
        AgentAction::Discrete(act_maintain(features))
    }
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn tag(&self) -> PolicyTag {
        PolicyTag::Random
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn act(&mut self, features: &[f64], _: &VehicleParams) -> AgentAction {
        AgentAction::Discrete(act_random(features, &mut self.rng))
    }
}

/// Trained actor-critic acting on its most likely action.
pub struct GreedyA2c {
    pub model: ActorCritic,
}

impl Policy for GreedyA2c {
    fn tag(&self) -> PolicyTag {
        match self.model.head {
            HeadKind::Discrete => PolicyTag::A2cDiscrete,
            HeadKind::Gaussian => PolicyTag::A2cContinuous,
        }
    }

    fn act(&mut self, features: &[f64], params: &VehicleParams) -> AgentAction {
        to_agent_action(self.model.greedy(features), params)
    }
}
