//! Policies: maintain and random baselines and actor-critic agents with a
//! small self-contained network and hand-written gradients.

pub mod a2c;
pub mod mlp;
pub mod policy;
pub mod train;

pub use a2c::{
    a2c_update, A2cConfig, ActorCritic, HeadKind, Sample, SampledAction, Transition,
    UpdateDiagnostics,
};
pub use mlp::Mlp;
pub use policy::{
    act_maintain, act_random, AgentAction, GreedyA2c, MaintainPolicy, Policy, PolicyTag,
    RandomPolicy,
};
pub use train::{initial_checkpoint, train, Checkpoint, EpisodeLog, TrainOptions, TrainingLog};
