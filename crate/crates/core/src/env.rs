//! Episodic environment: reset/step over a scenario, with either discrete
//! options executed by the pilot behind the shield, or raw continuous
//! (acceleration, steering-rate) commands.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pilot::{HighLevelAction, ManeuverPlan, PilotConfig};
use crate::road::{lane_of, VehicleState};
use crate::scenario::{challenger_state_at, check_drivability, Scenario};
use crate::shield::{screen, ShieldConfig, ShieldReason};
use crate::sim::{
    advance, check_termination, run_action, SimConfig, SimState, SubStep, Termination,
    TerminationReason,
};

/// Slot order: ego-lead, ego-rear, left-lead, left-rear, right-lead, right-rear.
pub const NEIGHBOR_SLOTS: usize = 6;
pub const OBS_DIM: usize = 4 + 3 * NEIGHBOR_SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    Hierarchical,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardTable {
    pub goal: f64,
    pub collision: f64,
    pub offroad: f64,
    pub timeout: f64,
    pub standstill: f64,
}

impl Default for RewardTable {
    fn default() -> Self {
        Self {
            goal: 1.0,
            collision: -1.0,
            offroad: -1.0,
            timeout: -0.5,
            standstill: -0.5,
        }
    }
}

impl RewardTable {
    pub fn reward(&self, reason: TerminationReason) -> f64 {
        match reason {
            TerminationReason::GoalReached => self.goal,
            TerminationReason::Collision => self.collision,
            TerminationReason::Offroad => self.offroad,
            TerminationReason::Timeout => self.timeout,
            TerminationReason::Standstill => self.standstill,
        }
    }
}

/// Divisors mapping raw observation quantities onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsScaling {
    /// Ego speed range `[0, speed]`, m/s.
    pub speed: f64,
    /// Distance-to-goal scale, m.
    pub goal_distance: f64,
    /// Neighbor range and absent-slot sentinel, m.
    pub sentinel: f64,
    /// Relative speed scale, m/s.
    pub rel_speed: f64,
}

impl Default for ObsScaling {
    fn default() -> Self {
        Self {
            speed: 50.0,
            goal_distance: 1000.0,
            sentinel: 200.0,
            rel_speed: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub mode: ActionMode,
    /// Decision tick in hierarchical mode, s.
    pub tick: f64,
    pub shield: ShieldConfig,
    pub pilot: PilotConfig,
    pub sim: SimConfig,
    pub rewards: RewardTable,
    pub scaling: ObsScaling,
    pub record_trace: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            mode: ActionMode::Hierarchical,
            tick: 1.0,
            shield: ShieldConfig::default(),
            pilot: PilotConfig::default(),
            sim: SimConfig::default(),
            rewards: RewardTable::default(),
            scaling: ObsScaling::default(),
            record_trace: false,
        }
    }
}

impl EnvConfig {
    pub fn continuous() -> Self {
        Self {
            mode: ActionMode::Continuous,
            shield: ShieldConfig {
                enabled: false,
                ..ShieldConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick.is_finite() && self.tick > 0.0) {
            return Err(Error::Config("tick must be > 0".into()));
        }
        let s = &self.scaling;
        if [s.speed, s.goal_distance, s.sentinel, s.rel_speed]
            .iter()
            .any(|x| !(x.is_finite() && *x > 0.0))
        {
            return Err(Error::Config("scaling constants must be > 0".into()));
        }
        if self.mode == ActionMode::Continuous && self.shield.enabled {
            return Err(Error::Config(
                "the shield is not available in continuous mode".into(),
            ));
        }
        Ok(())
    }

    pub fn tick_steps(&self, dt: f64) -> usize {
        ((self.tick / dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborSlot {
    pub present: bool,
    /// Challenger minus ego, m.
    pub rel_s_x: f64,
    /// Challenger minus ego, m/s.
    pub rel_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub ego_v: f64,
    pub ego_lane: usize,
    pub lateral_offset: f64,
    pub dist_to_goal: f64,
    pub neighbors: [NeighborSlot; NEIGHBOR_SLOTS],
}

impl Observation {
    /// Scaled feature vector of length [`OBS_DIM`], every entry in `[-1, 1]`.
    pub fn features(&self, scaling: &ObsScaling, lane_count: usize, lane_width: f64) -> Vec<f64> {
        let c = |x: f64| x.clamp(-1.0, 1.0);
        let mut f = Vec::with_capacity(OBS_DIM);
        f.push(c(2.0 * self.ego_v / scaling.speed - 1.0));
        f.push(if lane_count > 1 {
            c(2.0 * self.ego_lane as f64 / (lane_count - 1) as f64 - 1.0)
        } else {
            0.0
        });
        f.push(c(self.lateral_offset / (0.5 * lane_width)));
        f.push(c(self.dist_to_goal / scaling.goal_distance));
        for n in &self.neighbors {
            f.push(if n.present { 1.0 } else { -1.0 });
            f.push(c(n.rel_s_x / scaling.sentinel));
            f.push(c(n.rel_v / scaling.rel_speed));
        }
        f
    }
}

/// Ego lane, falling back to the nearest lane when off the carriageway.
fn ego_lane(ego: &VehicleState, scenario: &Scenario) -> usize {
    let road = &scenario.road;
    lane_of(ego.s_y, road).unwrap_or(if ego.s_y < road.y_min() {
        0
    } else {
        road.lane_count - 1
    })
}

/// Observation of the world at time `t`. Each neighbor slot holds the
/// nearest challenger (by |rel_s_x|) in its lane and direction; a
/// challenger level with the ego counts as lead.
pub fn encode_observation(
    scenario: &Scenario,
    ego: &VehicleState,
    t: f64,
    scaling: &ObsScaling,
) -> Observation {
    let lane = ego_lane(ego, scenario);
    let absent = |lead: bool| NeighborSlot {
        present: false,
        rel_s_x: if lead {
            scaling.sentinel
        } else {
            -scaling.sentinel
        },
        rel_v: 0.0,
    };
    let mut neighbors = [0, 1, 2, 3, 4, 5].map(|i| absent(i % 2 == 0));
    let left = lane + 1;
    let right = lane.checked_sub(1);
    for c in &scenario.challengers {
        let p = challenger_state_at(c, t);
        let Some(cl) = lane_of(p.s_y, &scenario.road) else {
            continue;
        };
        let cell = if cl == lane {
            0
        } else if cl == left {
            2
        } else if Some(cl) == right {
            4
        } else {
            continue;
        };
        let rel = p.s_x - ego.s_x;
        let slot = cell + usize::from(rel < 0.0);
        let n = &mut neighbors[slot];
        if !n.present || rel.abs() < n.rel_s_x.abs() {
            *n = NeighborSlot {
                present: true,
                rel_s_x: rel,
                rel_v: p.v - ego.v,
            };
        }
    }
    Observation {
        ego_v: ego.v,
        ego_lane: lane,
        lateral_offset: ego.s_y - scenario.road.centerline_y(lane),
        dist_to_goal: scenario.goal.s_x_min - ego.s_x,
        neighbors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub t: f64,
    pub shield_overridden: bool,
    pub shield_reason: ShieldReason,
    /// Action actually executed (hierarchical mode).
    pub approved: Option<HighLevelAction>,
    /// Sub-steps simulated by this call.
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub obs: Observation,
    pub features: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub reason: Option<TerminationReason>,
    pub info: StepInfo,
}

/// One simulated sub-step, for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    pub ego: VehicleState,
    pub accel: f64,
    pub steer_rate: f64,
    /// `[lateral, longitudinal]` executed, hierarchical mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<[usize; 2]>,
    /// `(id, s_x, s_y, psi)` per challenger.
    pub challengers: Vec<(String, f64, f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<TerminationReason>,
}

pub fn write_trace(records: &[TraceRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::schema(format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}

struct Episode {
    scenario: Arc<Scenario>,
    state: SimState,
    plan: Option<ManeuverPlan>,
    done: bool,
}

/// A single-threaded environment instance.
pub struct DrivingEnv {
    cfg: EnvConfig,
    episode: Option<Episode>,
    checked: Option<Arc<Scenario>>,
    seed: u64,
    trace: Vec<TraceRecord>,
}

impl DrivingEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            episode: None,
            checked: None,
            seed: 0,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scenario(&self) -> Option<&Arc<Scenario>> {
        self.episode.as_ref().map(|e| &e.scenario)
    }

    pub fn state(&self) -> Option<&SimState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn active_plan(&self) -> Option<&ManeuverPlan> {
        self.episode.as_ref().and_then(|e| e.plan.as_ref())
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    /// Start an episode. The scenario is validated and its challenger
    /// trajectories checked for drivability (once per shared instance).
    pub fn reset(&mut self, scenario: Arc<Scenario>, seed: u64) -> Result<Observation> {
        let known = self
            .checked
            .as_ref()
            .is_some_and(|c| Arc::ptr_eq(c, &scenario));
        if !known {
            scenario.validate()?;
            let report = check_drivability(&scenario);
            if !report.feasible {
                return Err(Error::Invariant(format!(
                    "scenario `{}` is not drivable: {} violation(s), first {:?}",
                    scenario.id,
                    report.violations.len(),
                    report.violations[0]
                )));
            }
            self.checked = Some(scenario.clone());
        }
        self.seed = seed;
        self.trace.clear();
        let state = SimState::start(&scenario);
        let obs = encode_observation(&scenario, &state.ego, 0.0, &self.cfg.scaling);
        self.episode = Some(Episode {
            scenario,
            state,
            plan: None,
            done: false,
        });
        Ok(obs)
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        let road = self.scenario().map(|s| s.road).unwrap_or_default();
        obs.features(&self.cfg.scaling, road.lane_count, road.lane_width)
    }

    fn live_episode(&mut self, mode: ActionMode) -> Result<&mut Episode> {
        if self.cfg.mode != mode {
            return Err(Error::Contract(format!(
                "environment is in {:?} mode, step called for {mode:?}",
                self.cfg.mode
            )));
        }
        match &mut self.episode {
            None => Err(Error::Contract("step before reset".into())),
            Some(e) if e.done => Err(Error::Contract("step after termination".into())),
            Some(e) => Ok(e),
        }
    }

    /// Execute one decision tick with `action`.
    pub fn step(&mut self, action: HighLevelAction) -> Result<StepOutcome> {
        let cfg = self.cfg;
        let record = cfg.record_trace;
        let ep = self.live_episode(ActionMode::Hierarchical)?;
        let scenario = ep.scenario.clone();
        let (approved, overridden, reason) = if cfg.shield.enabled {
            let v = screen(
                action,
                &ep.state,
                ep.plan.as_ref(),
                &scenario,
                &cfg.shield,
                &cfg.pilot,
            )?;
            (v.approved, v.overridden, v.reason)
        } else {
            (action, false, ShieldReason::None)
        };
        let steps = cfg.tick_steps(scenario.dt);
        let start = ep.state.step;
        let pair = [approved.lateral.index(), approved.longitudinal.index()];
        let mut trace = Vec::new();
        let end = run_action(
            &scenario,
            &mut ep.state,
            &mut ep.plan,
            approved,
            steps,
            &cfg.pilot,
            &cfg.sim,
            |st, sub| {
                if record {
                    trace.push(trace_record(&scenario, st, sub, Some(pair)));
                }
            },
        )?;
        let substeps = ep.state.step - start;
        self.trace.extend(trace);
        Ok(self.finish(end, substeps, overridden, reason, Some(approved)))
    }

    /// Execute one sub-step with raw commands, clamped to the actuator bounds.
    pub fn step_continuous(&mut self, accel: f64, steer_rate: f64) -> Result<StepOutcome> {
        if !accel.is_finite() || !steer_rate.is_finite() {
            return Err(Error::NonFinite("continuous action"));
        }
        let cfg = self.cfg;
        let ep = self.live_episode(ActionMode::Continuous)?;
        let p = ep.scenario.ego_params;
        let accel = accel.clamp(p.a_min, p.a_max);
        let steer_rate = steer_rate.clamp(-p.vdelta_max, p.vdelta_max);
        let end = advance(&ep.scenario, &mut ep.state, accel, steer_rate, &cfg.sim)?;
        if cfg.record_trace {
            let rec = trace_record(
                &ep.scenario,
                &ep.state,
                &SubStep {
                    accel,
                    steer_rate,
                    termination: end,
                },
                None,
            );
            self.trace.push(rec);
        }
        Ok(self.finish(end, 1, false, ShieldReason::None, None))
    }

    fn finish(
        &mut self,
        end: Option<Termination>,
        substeps: usize,
        overridden: bool,
        shield_reason: ShieldReason,
        approved: Option<HighLevelAction>,
    ) -> StepOutcome {
        let cfg = self.cfg;
        let ep = self.episode.as_mut().expect("live episode");
        // a run that ended exactly on the last step without another reason
        let end = end.or_else(|| check_termination(&ep.scenario, &ep.state, &cfg.sim));
        let reason = end.map(|t| t.reason);
        ep.done = reason.is_some();
        let t = ep.state.time(ep.scenario.dt);
        let obs = encode_observation(&ep.scenario, &ep.state.ego, t, &cfg.scaling);
        let road = ep.scenario.road;
        StepOutcome {
            features: obs.features(&cfg.scaling, road.lane_count, road.lane_width),
            obs,
            reward: reason.map_or(0.0, |r| cfg.rewards.reward(r)),
            terminated: reason.is_some(),
            reason,
            info: StepInfo {
                t,
                shield_overridden: overridden,
                shield_reason,
                approved,
                substeps,
            },
        }
    }

    /// Recorded sub-steps of the current episode.
    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }
}

fn trace_record(
    scenario: &Scenario,
    st: &SimState,
    sub: &SubStep,
    action: Option<[usize; 2]>,
) -> TraceRecord {
    let t = st.time(scenario.dt);
    TraceRecord {
        step: st.step,
        t,
        ego: st.ego,
        accel: sub.accel,
        steer_rate: sub.steer_rate,
        action,
        challengers: scenario
            .challengers
            .iter()
            .map(|c| {
                let p = challenger_state_at(c, t);
                (c.id.clone(), p.s_x, p.s_y, p.psi)
            })
            .collect(),
        termination: sub.termination.map(|t| t.reason),
    }
}
