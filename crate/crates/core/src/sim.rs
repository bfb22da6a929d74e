//! Sub-step simulation shared by the environment and the shield's rollouts:
//! ego integration against replayed challengers plus termination checks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pilot::{control, plan, HighLevelAction, ManeuverPlan, PilotConfig};
use crate::road::{bicycle_step, offroad, rectangles_overlap, VehicleState};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GoalReached,
    Collision,
    Offroad,
    Standstill,
    Timeout,
}

impl TerminationReason {
    /// Fixed reporting order.
    pub const ALL: [TerminationReason; 5] = [
        TerminationReason::GoalReached,
        TerminationReason::Collision,
        TerminationReason::Offroad,
        TerminationReason::Standstill,
        TerminationReason::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::GoalReached => "goal_reached",
            TerminationReason::Collision => "collision",
            TerminationReason::Offroad => "offroad",
            TerminationReason::Standstill => "standstill",
            TerminationReason::Timeout => "timeout",
        }
    }
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TerminationReason {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                crate::Error::param("reason", format!("unknown termination reason `{s}`"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Speed below which the ego counts as stopped, m/s.
    pub standstill_speed: f64,
    /// How long the ego must stay stopped, s.
    pub standstill_duration: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            standstill_speed: 0.1,
            standstill_duration: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    pub reason: TerminationReason,
    /// Index of the challenger hit, for collisions.
    pub challenger: Option<usize>,
}

/// Mutable episode state. Time is `step * dt`, never accumulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub ego: VehicleState,
    pub step: usize,
    pub still_steps: usize,
}

impl SimState {
    pub fn start(scenario: &Scenario) -> Self {
        Self {
            ego: scenario.ego_start.state,
            step: 0,
            still_steps: 0,
        }
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }
}

/// First challenger whose footprint overlaps the ego at time `t`.
pub fn collision_at(scenario: &Scenario, ego: &VehicleState, t: f64) -> Option<usize> {
    let fp = ego.footprint(&scenario.ego_params);
    scenario
        .challengers
        .iter()
        .position(|c| rectangles_overlap(&fp, &c.footprint_at(t)))
}

/// Termination status of `state`, by priority
/// Collision > Offroad > GoalReached > Standstill > Timeout.
pub fn check_termination(
    scenario: &Scenario,
    state: &SimState,
    cfg: &SimConfig,
) -> Option<Termination> {
    let t = state.time(scenario.dt);
    if let Some(i) = collision_at(scenario, &state.ego, t) {
        return Some(Termination {
            reason: TerminationReason::Collision,
            challenger: Some(i),
        });
    }
    let reason = if offroad(&state.ego.footprint(&scenario.ego_params), &scenario.road) {
        TerminationReason::Offroad
    } else if scenario.goal.contains(&state.ego, &scenario.road) {
        TerminationReason::GoalReached
    } else if state.still_steps >= standstill_steps(scenario.dt, cfg) {
        TerminationReason::Standstill
    } else if state.step >= scenario.steps() {
        TerminationReason::Timeout
    } else {
        return None;
    };
    Some(Termination {
        reason,
        challenger: None,
    })
}

fn standstill_steps(dt: f64, cfg: &SimConfig) -> usize {
    if cfg.standstill_duration.is_finite() {
        ((cfg.standstill_duration / dt).round() as usize).max(1)
    } else {
        usize::MAX
    }
}

/// Integrate one sub-step and report any termination.
pub fn advance(
    scenario: &Scenario,
    state: &mut SimState,
    accel: f64,
    steer_rate: f64,
    cfg: &SimConfig,
) -> Result<Option<Termination>> {
    state.ego = bicycle_step(
        &state.ego,
        accel,
        steer_rate,
        scenario.dt,
        &scenario.ego_params,
    )?;
    state.step += 1;
    if state.ego.v < cfg.standstill_speed {
        state.still_steps += 1;
    } else {
        state.still_steps = 0;
    }
    Ok(check_termination(scenario, state, cfg))
}

/// Executed command for one sub-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubStep {
    pub accel: f64,
    pub steer_rate: f64,
    pub termination: Option<Termination>,
}

/// Plan `action` at the current state, then run up to `steps` pilot-driven
/// sub-steps, stopping at the first termination. `on_step` sees the state
/// after every sub-step.
#[allow(clippy::too_many_arguments)]
pub fn run_action(
    scenario: &Scenario,
    state: &mut SimState,
    active: &mut Option<ManeuverPlan>,
    action: HighLevelAction,
    steps: usize,
    pilot: &PilotConfig,
    cfg: &SimConfig,
    mut on_step: impl FnMut(&SimState, &SubStep),
) -> Result<Option<Termination>> {
    let dt = scenario.dt;
    let p = plan(
        action,
        &state.ego,
        &scenario.road,
        active.as_ref(),
        state.time(dt),
        pilot,
    );
    *active = Some(p);
    for _ in 0..steps {
        let (accel, steer_rate) = control(
            &p,
            action.longitudinal,
            &state.ego,
            state.time(dt),
            &scenario.ego_params,
            pilot,
        );
        let termination = advance(scenario, state, accel, steer_rate, cfg)?;
        on_step(
            state,
            &SubStep {
                accel,
                steer_rate,
                termination,
            },
        );
        if termination.is_some() {
            return Ok(termination);
        }
    }
    Ok(None)
}

/// Run a fixed-action-per-tick policy to termination. Returns the
/// termination and the number of sub-steps simulated.
pub fn rollout_policy(
    scenario: &Scenario,
    tick_steps: usize,
    pilot: &PilotConfig,
    cfg: &SimConfig,
    mut policy: impl FnMut(usize, &SimState) -> HighLevelAction,
) -> Result<(Termination, usize)> {
    let mut state = SimState::start(scenario);
    let mut active = None;
    let mut tick = 0;
    loop {
        let a = policy(tick, &state);
        if let Some(t) = run_action(
            scenario,
            &mut state,
            &mut active,
            a,
            tick_steps,
            pilot,
            cfg,
            |_, _| {},
        )? {
            return Ok((t, state.step));
        }
        tick += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::{Lateral, Longitudinal};
    use crate::road::RoadNetwork;
    use crate::scenario::fixtures::*;

    #[test]
    fn empty_road_maintain_reaches_goal() {
        let s = simple_scenario(vec![]);
        let (t, steps) = rollout_policy(
            &s,
            10,
            &PilotConfig::default(),
            &SimConfig::default(),
            |_, _| HighLevelAction::MAINTAIN,
        )
        .unwrap();
        assert_eq!(t.reason, TerminationReason::GoalReached);
        // 30 m start, 25 m/s, goal at 400 m: first grid time with s_x >= 400
        assert_eq!(steps, 148);
    }

    #[test]
    fn same_lane_slower_lead_collides() {
        let road = RoadNetwork::default();
        let s = simple_scenario(vec![straight_track(
            "c",
            80.0,
            road.centerline_y(1),
            15.0,
            0.1,
            20.0,
        )]);
        let (t, _) = rollout_policy(
            &s,
            10,
            &PilotConfig::default(),
            &SimConfig::default(),
            |_, _| HighLevelAction::MAINTAIN,
        )
        .unwrap();
        assert_eq!(t.reason, TerminationReason::Collision);
        assert_eq!(t.challenger, Some(0));
    }

    #[test]
    fn hard_brake_from_low_speed_is_standstill() {
        let mut s = simple_scenario(vec![]);
        s.ego_start.state.v = 2.0;
        let hb = HighLevelAction::new(Lateral::Center, Longitudinal::HardBrake);
        let (t, steps) = rollout_policy(
            &s,
            10,
            &PilotConfig::default(),
            &SimConfig::default(),
            |_, _| hb,
        )
        .unwrap();
        assert_eq!(t.reason, TerminationReason::Standstill);
        // v hits 0 on step 3 (2.0 -> 1.2 -> 0.4 -> 0), then 30 stopped steps
        assert_eq!(steps, 32);
    }

    #[test]
    fn collision_outranks_goal_on_same_step() {
        let road = RoadNetwork::default();
        let mut s = simple_scenario(vec![straight_track(
            "c",
            40.0,
            road.centerline_y(1),
            0.0,
            0.1,
            20.0,
        )]);
        s.ego_start.state.s_x = 30.0 - 5.0;
        s.goal = crate::scenario::GoalRegion::any_lane(20.0, 60.0);
        let mut st = SimState::start(&s);
        st.ego.s_x = 37.0;
        let t = check_termination(&s, &st, &SimConfig::default()).unwrap();
        assert_eq!(t.reason, TerminationReason::Collision);
    }

    #[test]
    fn timeout_at_duration() {
        let mut s = simple_scenario(vec![]);
        s.goal = crate::scenario::GoalRegion::any_lane(900.0, 950.0);
        let (t, steps) = rollout_policy(
            &s,
            10,
            &PilotConfig::default(),
            &SimConfig::default(),
            |_, _| HighLevelAction::MAINTAIN,
        )
        .unwrap();
        assert_eq!(t.reason, TerminationReason::Timeout);
        assert_eq!(steps, s.steps());
    }

    #[test]
    fn reason_names_round_trip() {
        for r in TerminationReason::ALL {
            assert_eq!(r.as_str().parse::<TerminationReason>().unwrap(), r);
        }
    }
}
