//! The maneuver-executing pilot: turns a discrete (lateral, longitudinal)
//! option into per-step acceleration and steering-rate commands.
//!
//! Lane changes follow a quintic lateral reference with zero lateral speed
//! and acceleration at both ends and, once started, run to completion. The
//! pilot does not know about road edges: a lane change past the outermost
//! lane drives off the carriageway, and vetoing it is the shield's job.
//!
//! Lateral tracking is a cascade. Lateral error and reference lateral speed
//! give a bounded desired heading, heading error gives a desired yaw rate,
//! the yaw rate maps to a steering angle through the bicycle geometry, and a
//! proportional servo drives the steering rate toward it.

use serde::{Deserialize, Serialize};

use crate::road::{lane_of, RoadNetwork, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lateral {
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Longitudinal {
    Accelerate,
    Maintain,
    Brake,
    HardBrake,
}

impl Lateral {
    pub const ALL: [Lateral; 3] = [Lateral::Left, Lateral::Center, Lateral::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl Longitudinal {
    pub const ALL: [Longitudinal; 4] = [
        Longitudinal::Accelerate,
        Longitudinal::Maintain,
        Longitudinal::Brake,
        Longitudinal::HardBrake,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Joint discrete option. Wire encoding is `[lateral, longitudinal]` with
/// lateral `left=0, center=1, right=2` and longitudinal
/// `accelerate=0, maintain=1, brake=2, hard_brake=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HighLevelAction {
    pub lateral: Lateral,
    pub longitudinal: Longitudinal,
}

impl HighLevelAction {
    pub const COUNT: usize = 12;

    pub const MAINTAIN: HighLevelAction = HighLevelAction {
        lateral: Lateral::Center,
        longitudinal: Longitudinal::Maintain,
    };

    pub const fn new(lateral: Lateral, longitudinal: Longitudinal) -> Self {
        Self {
            lateral,
            longitudinal,
        }
    }

    /// Flat index `lateral * 4 + longitudinal`.
    pub fn index(self) -> usize {
        self.lateral.index() * 4 + self.longitudinal.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Some(Self::new(
            Lateral::from_index(i / 4)?,
            Longitudinal::from_index(i % 4)?,
        ))
    }

    pub fn from_pair(lat: usize, lon: usize) -> Option<Self> {
        Some(Self::new(
            Lateral::from_index(lat)?,
            Longitudinal::from_index(lon)?,
        ))
    }

    pub fn all() -> impl Iterator<Item = HighLevelAction> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotConfig {
    /// Fixed lane-change duration, seconds.
    pub lane_change_duration: f64,
    /// Accelerations for accelerate / maintain / brake / hard_brake.
    pub option_accel: [f64; 4],
    /// Lateral position error to lateral speed, 1/s.
    pub k_lat: f64,
    /// Heading error to yaw rate, 1/s.
    pub k_heading: f64,
    /// Steering servo gain, 1/s.
    pub k_steer: f64,
    /// Bound on the desired heading, rad.
    pub heading_max: f64,
    /// Speed floor for heading/curvature conversions. Below it the pilot
    /// steers as if moving at this speed, which keeps the wheel from
    /// winding up at a crawl.
    pub min_ref_speed: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            lane_change_duration: 4.0,
            option_accel: [2.0, 0.0, -3.0, -8.0],
            k_lat: 1.0,
            k_heading: 4.0,
            k_steer: 8.0,
            heading_max: 0.35,
            min_ref_speed: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    KeepLane,
    LaneChangeLeft,
    LaneChangeRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverPlan {
    pub kind: ManeuverKind,
    pub start_time: f64,
    pub end_time: f64,
    /// `None` when the maneuver leaves the carriageway.
    pub target_lane: Option<usize>,
    pub y_start: f64,
    pub y_target: f64,
}

/// Lateral reference at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralRef {
    pub y: f64,
    pub y_dot: f64,
    pub y_ddot: f64,
}

impl ManeuverPlan {
    pub fn is_lane_change(&self) -> bool {
        self.kind != ManeuverKind::KeepLane
    }

    /// True while a lane change still has time to run at `t`.
    pub fn is_active(&self, t: f64) -> bool {
        self.is_lane_change() && t < self.end_time - 1e-9
    }

    pub fn reference(&self, t: f64) -> LateralRef {
        let span = self.end_time - self.start_time;
        if !self.is_lane_change() || span <= 0.0 || t >= self.end_time {
            return LateralRef {
                y: self.y_target,
                y_dot: 0.0,
                y_ddot: 0.0,
            };
        }
        let tau = ((t - self.start_time) / span).clamp(0.0, 1.0);
        let d = self.y_target - self.y_start;
        let (t2, t3) = (tau * tau, tau * tau * tau);
        LateralRef {
            y: self.y_start + d * (10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * t2),
            y_dot: d / span * (30.0 * t2 - 60.0 * t3 + 30.0 * t2 * t2),
            y_ddot: d / (span * span) * (60.0 * tau - 180.0 * t2 + 120.0 * t3),
        }
    }

    /// Reference `(s_y, psi)` at time `t` for an ego moving at speed `v`.
    pub fn reference_pose(&self, t: f64, v: f64, min_speed: f64) -> (f64, f64) {
        let r = self.reference(t);
        (r.y, r.y_dot.atan2(v.max(min_speed)))
    }
}

/// The lane the pilot considers its own: the target of the previous plan
/// when there is one, so an unfinished lateral transition is not undone.
pub fn pilot_lane(ego: &VehicleState, road: &RoadNetwork, active: Option<&ManeuverPlan>) -> usize {
    match active.and_then(|p| p.target_lane) {
        Some(l) if l < road.lane_count => l,
        _ => current_lane(ego, road),
    }
}

fn current_lane(ego: &VehicleState, road: &RoadNetwork) -> usize {
    lane_of(ego.s_y, road).unwrap_or(if ego.s_y < road.y_min() {
        0
    } else {
        road.lane_count - 1
    })
}

/// Choose the maneuver for `action`. An unfinished lane change is kept
/// as-is, whatever the incoming lateral option.
pub fn plan(
    action: HighLevelAction,
    ego: &VehicleState,
    road: &RoadNetwork,
    active: Option<&ManeuverPlan>,
    t_now: f64,
    cfg: &PilotConfig,
) -> ManeuverPlan {
    if let Some(p) = active {
        if p.is_active(t_now) {
            return *p;
        }
    }
    let lane = pilot_lane(ego, road, active) as i64;
    let (kind, target) = match action.lateral {
        Lateral::Left => (ManeuverKind::LaneChangeLeft, lane + 1),
        Lateral::Right => (ManeuverKind::LaneChangeRight, lane - 1),
        Lateral::Center => (ManeuverKind::KeepLane, lane),
    };
    let y_target = road.origin.y + (target as f64 + 0.5) * road.lane_width;
    let end_time = if kind == ManeuverKind::KeepLane {
        t_now
    } else {
        t_now + cfg.lane_change_duration
    };
    ManeuverPlan {
        kind,
        start_time: t_now,
        end_time,
        target_lane: road.has_lane(target).then_some(target as usize),
        y_start: ego.s_y,
        y_target,
    }
}

/// True when `action` asks for a lane that does not exist.
pub fn lateral_leaves_road(
    action: HighLevelAction,
    ego: &VehicleState,
    road: &RoadNetwork,
    active: Option<&ManeuverPlan>,
) -> bool {
    let lane = pilot_lane(ego, road, active);
    match action.lateral {
        Lateral::Left => lane + 1 >= road.lane_count,
        Lateral::Right => lane == 0,
        Lateral::Center => false,
    }
}

/// Longitudinal option to acceleration, clamped to the vehicle limits.
pub fn option_accel(lon: Longitudinal, params: &VehicleParams, cfg: &PilotConfig) -> f64 {
    cfg.option_accel[lon.index()].clamp(params.a_min, params.a_max)
}

/// Per-step commands `(accel, steer_rate)` tracking `plan` at time `t`.
pub fn control(
    plan: &ManeuverPlan,
    lon: Longitudinal,
    ego: &VehicleState,
    t: f64,
    params: &VehicleParams,
    cfg: &PilotConfig,
) -> (f64, f64) {
    let accel = option_accel(lon, params, cfg);
    let r = plan.reference(t);
    let v = ego.v.max(cfg.min_ref_speed);
    let heading_des = (r.y_dot + cfg.k_lat * (r.y - ego.s_y))
        .atan2(v)
        .clamp(-cfg.heading_max, cfg.heading_max);
    let yaw_rate = cfg.k_heading * (heading_des - ego.psi) + r.y_ddot / v;
    let delta_des = (params.wheelbase * yaw_rate / v)
        .atan()
        .clamp(-params.delta_max, params.delta_max);
    let steer_rate =
        (cfg.k_steer * (delta_des - ego.delta)).clamp(-params.vdelta_max, params.vdelta_max);
    (accel, steer_rate)
}
