//! Safety shield: screens a proposed option by rolling it forward with the
//! same pilot and integrator used for execution, and substitutes a fallback
//! when the prediction collides or leaves the road.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pilot::{
    lateral_leaves_road, HighLevelAction, Lateral, Longitudinal, ManeuverPlan, PilotConfig,
};
use crate::scenario::Scenario;
use crate::sim::{run_action, SimConfig, SimState, TerminationReason};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShieldConfig {
    pub enabled: bool,
    /// Minimum rollout horizon, s. The effective horizon also covers a full
    /// lane change.
    pub horizon: f64,
}

impl Default for ShieldConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            horizon: 5.0,
        }
    }
}

impl ShieldConfig {
    pub fn horizon_steps(&self, dt: f64, pilot: &PilotConfig) -> usize {
        (self.horizon.max(pilot.lane_change_duration) / dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShieldReason {
    None,
    PredictedCollision,
    PredictedOffroad,
    NoAdjacentLane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShieldVerdict {
    pub approved: HighLevelAction,
    pub overridden: bool,
    pub reason: ShieldReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Safe,
    Collision,
    Offroad,
}

/// Roll `action` forward from `state`, holding it for the whole horizon.
/// The rollout ends safely at the goal or at the scenario's end.
pub fn predict(
    action: HighLevelAction,
    state: &SimState,
    active: Option<&ManeuverPlan>,
    scenario: &Scenario,
    horizon_steps: usize,
    pilot: &PilotConfig,
) -> Result<Prediction> {
    let cfg = SimConfig {
        standstill_duration: f64::INFINITY,
        ..SimConfig::default()
    };
    let mut st = *state;
    let mut plan = active.copied();
    let end = run_action(
        scenario,
        &mut st,
        &mut plan,
        action,
        horizon_steps,
        pilot,
        &cfg,
        |_, _| {},
    )?;
    Ok(match end.map(|t| t.reason) {
        Some(TerminationReason::Collision) => Prediction::Collision,
        Some(TerminationReason::Offroad) => Prediction::Offroad,
        _ => Prediction::Safe,
    })
}

/// Approve `proposed` or substitute the first safe fallback from
/// `[same lateral + hard_brake, center + hard_brake]`. When nothing is
/// safe, `center + hard_brake` is approved anyway.
pub fn screen(
    proposed: HighLevelAction,
    state: &SimState,
    active: Option<&ManeuverPlan>,
    scenario: &Scenario,
    cfg: &ShieldConfig,
    pilot: &PilotConfig,
) -> Result<ShieldVerdict> {
    let last_resort = HighLevelAction::new(Lateral::Center, Longitudinal::HardBrake);
    let horizon = cfg.horizon_steps(scenario.dt, pilot);

    let (reason, ladder) = if lateral_leaves_road(proposed, &state.ego, &scenario.road, active) {
        (
            ShieldReason::NoAdjacentLane,
            [
                HighLevelAction::new(Lateral::Center, proposed.longitudinal),
                last_resort,
            ],
        )
    } else {
        let reason = match predict(proposed, state, active, scenario, horizon, pilot)? {
            Prediction::Safe => {
                return Ok(ShieldVerdict {
                    approved: proposed,
                    overridden: false,
                    reason: ShieldReason::None,
                })
            }
            Prediction::Collision => ShieldReason::PredictedCollision,
            Prediction::Offroad => ShieldReason::PredictedOffroad,
        };
        (
            reason,
            [
                HighLevelAction::new(proposed.lateral, Longitudinal::HardBrake),
                last_resort,
            ],
        )
    };

    let mut approved = last_resort;
    for (i, cand) in ladder.iter().enumerate() {
        if *cand == proposed || ladder[..i].contains(cand) {
            continue;
        }
        if predict(*cand, state, active, scenario, horizon, pilot)? == Prediction::Safe {
            approved = *cand;
            break;
        }
    }
    let overridden = approved != proposed;
    Ok(ShieldVerdict {
        approved,
        overridden,
        reason: if overridden {
            reason
        } else {
            ShieldReason::None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::RoadNetwork;
    use crate::scenario::fixtures::*;

    fn screen_at(s: &Scenario, a: HighLevelAction, st: &SimState) -> ShieldVerdict {
        screen(
            a,
            st,
            None,
            s,
            &ShieldConfig::default(),
            &PilotConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn left_from_leftmost_is_vetoed() {
        let road = RoadNetwork::default();
        let mut s = simple_scenario(vec![]);
        s.ego_start.state.s_y = road.centerline_y(2);
        s.ego_start.lane = 2;
        let a = HighLevelAction::new(Lateral::Left, Longitudinal::Accelerate);
        let v = screen_at(&s, a, &SimState::start(&s));
        assert!(v.overridden);
        assert_eq!(v.reason, ShieldReason::NoAdjacentLane);
        assert_eq!(
            v.approved,
            HighLevelAction::new(Lateral::Center, Longitudinal::Accelerate)
        );
    }

    #[test]
    fn empty_road_maintain_passes() {
        let s = simple_scenario(vec![]);
        let v = screen_at(&s, HighLevelAction::MAINTAIN, &SimState::start(&s));
        assert!(!v.overridden);
        assert_eq!(v.reason, ShieldReason::None);
        assert_eq!(v.approved, HighLevelAction::MAINTAIN);
    }

    #[test]
    fn slow_lead_forces_hard_brake() {
        let road = RoadNetwork::default();
        // 25 vs 20 m/s with a 20.5 m gap: maintain hits at ~4.1 s, braking avoids it
        let s = simple_scenario(vec![straight_track(
            "c",
            55.0,
            road.centerline_y(1),
            20.0,
            0.1,
            20.0,
        )]);
        let st = SimState::start(&s);
        let v = screen_at(&s, HighLevelAction::MAINTAIN, &st);
        assert!(v.overridden);
        assert_eq!(v.reason, ShieldReason::PredictedCollision);
        assert_eq!(
            v.approved,
            HighLevelAction::new(Lateral::Center, Longitudinal::HardBrake)
        );
    }

    #[test]
    fn unavoidable_falls_back_to_center_hard_brake() {
        let road = RoadNetwork::default();
        // a stopped car right ahead in every lane
        let s = simple_scenario(
            (0..3)
                .map(|l| {
                    straight_track(&format!("c{l}"), 40.0, road.centerline_y(l), 0.0, 0.1, 20.0)
                })
                .collect(),
        );
        let st = SimState::start(&s);
        let a = HighLevelAction::new(Lateral::Left, Longitudinal::Accelerate);
        let v = screen_at(&s, a, &st);
        assert_eq!(
            v.approved,
            HighLevelAction::new(Lateral::Center, Longitudinal::HardBrake)
        );
        assert_eq!(v.reason, ShieldReason::PredictedCollision);
        let again = screen_at(&s, v.approved, &st);
        assert!(!again.overridden);
        assert_eq!(again.reason, ShieldReason::None);
    }

    #[test]
    fn horizon_covers_lane_change() {
        let cfg = ShieldConfig {
            enabled: false,
            horizon: 1.0,
        };
        assert_eq!(cfg.horizon_steps(0.1, &PilotConfig::default()), 40);
    }
}
