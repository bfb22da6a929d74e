use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use super::a2c::{a2c_update, A2cConfig, ActorCritic, HeadKind, RmsProp, Transition};
use super::policy::{to_agent_action, AgentAction};
use crate::env::{ActionMode, DrivingEnv, EnvConfig, StepOutcome, OBS_DIM};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sim::TerminationReason;

pub const CHECKPOINT_FORMAT: &str = "sad-sim-a2c";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub substeps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub rng_actions: ChaCha8Rng,
    pub rng_scenarios: ChaCha8Rng,
}

/// Everything needed to evaluate a trained model or resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: A2cConfig,
    pub model: ActorCritic,
    pub optimizer: RmsProp,
    pub trainer: TrainerState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| Error::schema("checkpoint", e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::schema(
                "format",
                format!(
                    "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, got {} v{}",
                    c.format, c.version
                ),
            ));
        }
        if !c.model.is_finite() {
            return Err(Error::schema("model", "non-finite parameters"));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub scenario: String,
    pub reason: TerminationReason,
    pub ret: f64,
    /// Sub-steps in this episode.
    pub length: usize,
    /// Sub-steps trained so far, including this episode.
    pub substeps_total: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

pub const TRAINING_LOG_HEADER: &str = "episode,scenario,reason,return,length,substeps_total";

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAINING_LOG_HEADER);
        s.push('\n');
        for e in &self.episodes {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.episode, e.scenario, e.reason, e.ret, e.length, e.substeps_total
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRAINING_LOG_HEADER => {}
            _ => return Err(Error::schema("header", "not a training log")),
        }
        let mut episodes = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::schema(format!("line {}", i + 2), format!("bad {what}"));
            if f.len() != 6 {
                return Err(bad("field count"));
            }
            episodes.push(EpisodeLog {
                episode: f[0].parse().map_err(|_| bad("episode"))?,
                scenario: f[1].to_string(),
                reason: f[2].parse()?,
                ret: f[3].parse().map_err(|_| bad("return"))?,
                length: f[4].parse().map_err(|_| bad("length"))?,
                substeps_total: f[5].parse().map_err(|_| bad("substeps_total"))?,
            });
        }
        Ok(Self { episodes })
    }

    pub fn reasons(&self) -> Vec<TerminationReason> {
        self.episodes.iter().map(|e| e.reason).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub head: HeadKind,
    pub a2c: A2cConfig,
    pub env: EnvConfig,
    /// Total environment sub-steps to train for, counting any resumed ones.
    pub budget: u64,
    pub seed: u64,
    /// Sub-steps between checkpoint callbacks.
    pub checkpoint_every: Option<u64>,
}

impl TrainOptions {
    pub fn new(head: HeadKind, budget: u64, seed: u64) -> Self {
        Self {
            head,
            a2c: A2cConfig::default(),
            env: match head {
                HeadKind::Discrete => EnvConfig::default(),
                HeadKind::Gaussian => EnvConfig::continuous(),
            },
            budget,
            seed,
            checkpoint_every: None,
        }
    }
}

/// Fresh checkpoint with initialized parameters and untouched RNG streams.
pub fn initial_checkpoint(opts: &TrainOptions) -> Result<Checkpoint> {
    opts.a2c.validate()?;
    let mut init = ChaCha8Rng::seed_from_u64(opts.seed);
    let model = ActorCritic::new(opts.head, OBS_DIM, &opts.a2c, &mut init);
    let mut rng_actions = ChaCha8Rng::seed_from_u64(opts.seed);
    rng_actions.set_stream(1);
    let mut rng_scenarios = ChaCha8Rng::seed_from_u64(opts.seed);
    rng_scenarios.set_stream(2);
    Ok(Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        seed: opts.seed,
        config: opts.a2c,
        optimizer: RmsProp::new(model.param_count()),
        model,
        trainer: TrainerState {
            substeps: 0,
            episodes: 0,
            updates: 0,
            rng_actions,
            rng_scenarios,
        },
    })
}

struct Running {
    scenario: Arc<Scenario>,
    obs: Vec<f64>,
    ret: f64,
    length: usize,
}

fn start_episode(
    env: &mut DrivingEnv,
    scenarios: &[Arc<Scenario>],
    st: &mut TrainerState,
) -> Result<Running> {
    let s = scenarios[st.rng_scenarios.gen_range(0..scenarios.len())].clone();
    let obs = env.reset(s.clone(), st.episodes)?;
    Ok(Running {
        obs: env.features(&obs),
        scenario: s,
        ret: 0.0,
        length: 0,
    })
}

/// Train an actor-critic on episodes drawn uniformly from `scenarios`.
/// With `resume`, training continues from that checkpoint (a partially
/// played episode at checkpoint time is not resumed). `on_checkpoint` runs
/// every `checkpoint_every` sub-steps.
pub fn train(
    scenarios: &[Arc<Scenario>],
    opts: &TrainOptions,
    resume: Option<Checkpoint>,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<(Checkpoint, TrainingLog)> {
    let expected = match opts.head {
        HeadKind::Discrete => ActionMode::Hierarchical,
        HeadKind::Gaussian => ActionMode::Continuous,
    };
    if opts.env.mode != expected {
        return Err(Error::Config(format!(
            "{:?} head needs {expected:?} mode",
            opts.head
        )));
    }
    let mut ck = match resume {
        Some(c) => {
            if c.model.head != opts.head || c.model.obs_dim() != OBS_DIM {
                return Err(Error::Config(
                    "checkpoint does not match the requested policy".into(),
                ));
            }
            c
        }
        None => initial_checkpoint(opts)?,
    };
    let cfg = ck.config;
    cfg.validate()?;
    let mut log = TrainingLog::default();
    if ck.trainer.substeps >= opts.budget {
        return Ok((ck, log));
    }
    if scenarios.is_empty() {
        return Err(Error::Empty("training scenarios"));
    }

    let mut env = DrivingEnv::new(opts.env)?;
    let mut run = start_episode(&mut env, scenarios, &mut ck.trainer)?;
    let mut next_ck = opts
        .checkpoint_every
        .map(|k| ck.trainer.substeps + k.max(1));
    let mut rollout = Vec::with_capacity(cfg.n_steps);

    while ck.trainer.substeps < opts.budget {
        rollout.clear();
        let mut done = false;
        for _ in 0..cfg.n_steps {
            let sampled = ck.model.sample(&run.obs, &mut ck.trainer.rng_actions);
            let out: StepOutcome = match to_agent_action(sampled, &run.scenario.ego_params) {
                AgentAction::Discrete(a) => env.step(a)?,
                AgentAction::Continuous { accel, steer_rate } => {
                    env.step_continuous(accel, steer_rate)?
                }
            };
            ck.trainer.substeps += out.info.substeps as u64;
            run.ret += out.reward;
            run.length += out.info.substeps;
            done = out.terminated;
            rollout.push(Transition {
                obs: std::mem::replace(&mut run.obs, out.features),
                action: sampled,
                reward: out.reward,
                done,
            });
            if done {
                log.episodes.push(EpisodeLog {
                    episode: ck.trainer.episodes,
                    scenario: run.scenario.id.clone(),
                    reason: out.reason.expect("terminated outcome carries a reason"),
                    ret: run.ret,
                    length: run.length,
                    substeps_total: ck.trainer.substeps,
                });
                ck.trainer.episodes += 1;
                break;
            }
            if ck.trainer.substeps >= opts.budget {
                break;
            }
        }
        let last = (!done).then_some(run.obs.as_slice());
        a2c_update(&mut ck.model, &mut ck.optimizer, &rollout, last, &cfg)?;
        ck.trainer.updates += 1;
        if done && ck.trainer.substeps < opts.budget {
            run = start_episode(&mut env, scenarios, &mut ck.trainer)?;
        }
        if let Some(at) = next_ck {
            if ck.trainer.substeps >= at {
                on_checkpoint(&ck)?;
                next_ck = Some(ck.trainer.substeps + opts.checkpoint_every.unwrap_or(1).max(1));
            }
        }
    }
    Ok((ck, log))
}
