//! Scenario data model: road, ego start, goal and open-loop challenger
//! trajectories.

mod commonroad;
mod drivability;
mod json;

pub use commonroad::{import_commonroad_xml, import_commonroad_xml_with_dt};
pub use drivability::{
    check_drivability, DrivabilityReport, Violation, ACCEL_BOUNDS, YAW_RATE_BOUND,
};
pub use json::{load_json, load_json_file, save_json, save_json_file, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road::{
    lane_of, rectangles_overlap, Footprint, RoadNetwork, Vec2, VehicleParams, VehicleState,
};

/// Relative tolerance used for time-grid comparisons.
pub(crate) const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    TypeA,
    TypeB,
    Cutout,
    RealRoad,
    Other,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::TypeA => "TypeA",
            ScenarioKind::TypeB => "TypeB",
            ScenarioKind::Cutout => "Cutout",
            ScenarioKind::RealRoad => "RealRoad",
            ScenarioKind::Other => "Other",
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "typea" | "type_a" => Ok(ScenarioKind::TypeA),
            "b" | "typeb" | "type_b" => Ok(ScenarioKind::TypeB),
            "cutout" | "cut" | "c" => Ok(ScenarioKind::Cutout),
            "realroad" | "real" | "highd" => Ok(ScenarioKind::RealRoad),
            "other" => Ok(ScenarioKind::Other),
            _ => Err(Error::param("kind", format!("unknown scenario kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub s_x: f64,
    pub s_y: f64,
    pub v: f64,
    pub psi: f64,
}

impl TrajectoryPoint {
    fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.s_x.is_finite()
            && self.s_y.is_finite()
            && self.v.is_finite()
            && self.psi.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengerTrack {
    pub id: String,
    pub length: f64,
    pub width: f64,
    pub points: Vec<TrajectoryPoint>,
}

impl ChallengerTrack {
    pub fn dt(&self) -> f64 {
        self.points[1].t - self.points[0].t
    }

    pub fn footprint_at(&self, t: f64) -> Footprint {
        let p = challenger_state_at(self, t);
        Footprint::new(Vec2::new(p.s_x, p.s_y), p.psi, self.length, self.width)
    }

    fn validate(&self, path: &str) -> Result<()> {
        if !(self.length.is_finite()
            && self.length > 0.0
            && self.width.is_finite()
            && self.width > 0.0)
        {
            return Err(Error::schema(
                format!("{path}.length/width"),
                "must be finite and > 0",
            ));
        }
        if self.points.len() < 2 {
            return Err(Error::schema(
                format!("{path}.points"),
                "need at least 2 points",
            ));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::schema(
                format!("{path}.points[{i}]"),
                "non-finite field",
            ));
        }
        if self.points[0].t < 0.0 {
            return Err(Error::schema(format!("{path}.points[0].t"), "must be >= 0"));
        }
        let dt = self.dt();
        if dt <= 0.0 {
            return Err(Error::schema(
                format!("{path}.points"),
                "times must increase strictly",
            ));
        }
        for (i, w) in self.points.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::schema(
                    format!("{path}.points[{}].t", i + 1),
                    format!("non-uniform spacing {step} (expected {dt})"),
                ));
            }
        }
        Ok(())
    }
}

/// Goal region along the road. `allowed_lanes == None` means any lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub s_x_min: f64,
    pub s_x_max: f64,
    pub allowed_lanes: Option<Vec<usize>>,
}

impl GoalRegion {
    pub fn any_lane(s_x_min: f64, s_x_max: f64) -> Self {
        Self {
            s_x_min,
            s_x_max,
            allowed_lanes: None,
        }
    }

    pub fn contains(&self, state: &VehicleState, road: &RoadNetwork) -> bool {
        if state.s_x < self.s_x_min || state.s_x > self.s_x_max {
            return false;
        }
        match (&self.allowed_lanes, lane_of(state.s_y, road)) {
            (None, Some(_)) => true,
            (Some(lanes), Some(l)) => lanes.contains(&l),
            (_, None) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoStart {
    pub state: VehicleState,
    pub lane: usize,
}

/// Free-form provenance carried with a scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioMeta {
    /// Generated with the relaxed criterion: the maintain policy reaches the goal.
    #[serde(default)]
    pub easy: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub road: RoadNetwork,
    pub dt: f64,
    pub duration: f64,
    pub ego_start: EgoStart,
    pub ego_params: VehicleParams,
    pub goal: GoalRegion,
    pub challengers: Vec<ChallengerTrack>,
    #[serde(default)]
    pub meta: ScenarioMeta,
}

impl Scenario {
    /// Number of simulation steps covering `[0, duration]`.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Check every structural invariant. Errors carry the offending field path.
    pub fn validate(&self) -> Result<()> {
        self.road
            .validate()
            .map_err(|e| Error::schema("road", e.to_string()))?;
        self.ego_params
            .validate()
            .map_err(|e| Error::schema("ego_params", e.to_string()))?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::schema("dt", "must be finite and > 0"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::schema("duration", "must be finite and > 0"));
        }
        let ratio = self.duration / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(Error::Invariant(format!(
                "duration {} is not an integer multiple of dt {}",
                self.duration, self.dt
            )));
        }

        let ego = &self.ego_start;
        if !ego.state.is_finite() {
            return Err(Error::schema("ego_start.state", "non-finite field"));
        }
        if ego.state.v < 0.0 || ego.state.delta.abs() > self.ego_params.delta_max {
            return Err(Error::schema(
                "ego_start.state",
                "speed or steering out of range",
            ));
        }
        if lane_of(ego.state.s_y, &self.road) != Some(ego.lane) {
            return Err(Error::schema(
                "ego_start.lane",
                format!("lane {} does not contain s_y {}", ego.lane, ego.state.s_y),
            ));
        }

        let g = &self.goal;
        if !(g.s_x_min.is_finite() && g.s_x_max.is_finite() && g.s_x_min < g.s_x_max) {
            return Err(Error::schema("goal", "need finite s_x_min < s_x_max"));
        }
        if let Some(lanes) = &g.allowed_lanes {
            if lanes.is_empty() || lanes.iter().any(|&l| l >= self.road.lane_count) {
                return Err(Error::schema(
                    "goal.allowed_lanes",
                    "lane index out of range",
                ));
            }
        }

        let ego_fp = ego.state.footprint(&self.ego_params);
        for (i, ch) in self.challengers.iter().enumerate() {
            let path = format!("challengers[{i}]");
            ch.validate(&path)?;
            if (ch.dt() - self.dt).abs() > 1e-6 * self.dt {
                return Err(Error::Invariant(format!(
                    "{path}: spacing {} differs from scenario dt {}",
                    ch.dt(),
                    self.dt
                )));
            }
            let first = ch.points[0].t;
            let last = ch.points[ch.points.len() - 1].t;
            if first.abs() > TIME_EPS || (last - self.duration).abs() > 1e-6 {
                return Err(Error::Invariant(format!(
                    "{path}: track spans [{first}, {last}], expected [0, {}]",
                    self.duration
                )));
            }
            if rectangles_overlap(&ego_fp, &ch.footprint_at(0.0)) {
                return Err(Error::Invariant(format!("{path} overlaps the ego at t=0")));
            }
        }
        Ok(())
    }
}

/// Open-loop replay: exact samples at grid times, linear interpolation of
/// position and speed in between, nearest-sample heading, and the last
/// sample held after the track ends.
pub fn challenger_state_at(track: &ChallengerTrack, t: f64) -> TrajectoryPoint {
    let pts = &track.points;
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if t <= first.t {
        return TrajectoryPoint { t, ..first };
    }
    if t >= last.t {
        return TrajectoryPoint { t, ..last };
    }
    let dt = track.dt();
    let u = (t - first.t) / dt;
    let k = u.round();
    if (u - k).abs() < 1e-9 {
        let p = pts[k as usize];
        return TrajectoryPoint { t, ..p };
    }
    let i = (u.floor() as usize).min(pts.len() - 2);
    let (a, b) = (pts[i], pts[i + 1]);
    let w = (t - a.t) / (b.t - a.t);
    let lerp = |x: f64, y: f64| x + (y - x) * w;
    TrajectoryPoint {
        t,
        s_x: lerp(a.s_x, b.s_x),
        s_y: lerp(a.s_y, b.s_y),
        v: lerp(a.v, b.v),
        psi: if w < 0.5 { a.psi } else { b.psi },
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Constant-velocity straight track sampled at `dt` over `[0, duration]`.
    pub fn straight_track(
        id: &str,
        x0: f64,
        y: f64,
        v: f64,
        dt: f64,
        duration: f64,
    ) -> ChallengerTrack {
        let n = (duration / dt).round() as usize;
        ChallengerTrack {
            id: id.into(),
            length: 4.5,
            width: 1.8,
            points: (0..=n)
                .map(|k| {
                    let t = k as f64 * dt;
                    TrajectoryPoint {
                        t,
                        s_x: x0 + v * t,
                        s_y: y,
                        v,
                        psi: 0.0,
                    }
                })
                .collect(),
        }
    }

    pub fn simple_scenario(challengers: Vec<ChallengerTrack>) -> Scenario {
        let road = RoadNetwork::default();
        Scenario {
            id: "fixture".into(),
            kind: ScenarioKind::Other,
            road,
            dt: 0.1,
            duration: 20.0,
            ego_start: EgoStart {
                state: VehicleState::new(30.0, road.centerline_y(1), 25.0),
                lane: 1,
            },
            ego_params: VehicleParams::default(),
            goal: GoalRegion::any_lane(400.0, 450.0),
            challengers,
            meta: ScenarioMeta::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn replay_exact_interp_and_hold() {
        let mut tr = straight_track("c", 10.0, 5.25, 20.0, 0.1, 1.0);
        assert_eq!(challenger_state_at(&tr, 0.3).s_x, tr.points[3].s_x);
        tr.points[4].s_x = 10.0;
        tr.points[5].s_x = 12.0;
        let mid = challenger_state_at(&tr, 0.45);
        assert!((mid.s_x - 11.0).abs() < 1e-12);
        let after = challenger_state_at(&tr, 5.0);
        let last = tr.points.last().unwrap();
        assert_eq!(
            (after.s_x, after.s_y, after.v),
            (last.s_x, last.s_y, last.v)
        );
    }

    #[test]
    fn validation_catches_invariants() {
        let road = RoadNetwork::default();
        let ok = simple_scenario(vec![straight_track(
            "c",
            80.0,
            road.centerline_y(1),
            25.0,
            0.1,
            20.0,
        )]);
        ok.validate().unwrap();

        let mut bad = ok.clone();
        bad.duration = 20.05;
        assert!(matches!(bad.validate(), Err(Error::Invariant(_))));

        let mut short = ok.clone();
        short.challengers[0].points.truncate(10);
        assert!(matches!(short.validate(), Err(Error::Invariant(_))));

        let mut overlap = ok.clone();
        overlap.challengers = vec![straight_track(
            "c",
            31.0,
            road.centerline_y(1),
            25.0,
            0.1,
            20.0,
        )];
        assert!(overlap.validate().is_err());

        let mut lane = ok;
        lane.ego_start.lane = 0;
        assert!(matches!(lane.validate(), Err(Error::Schema { .. })));
    }

    #[test]
    fn goal_region_lanes() {
        let road = RoadNetwork::default();
        let mut g = GoalRegion::any_lane(100.0, 200.0);
        let s = VehicleState::new(150.0, road.centerline_y(2), 10.0);
        assert!(g.contains(&s, &road));
        g.allowed_lanes = Some(vec![0]);
        assert!(!g.contains(&s, &road));
        assert!(!g.contains(&VehicleState::new(250.0, 1.0, 1.0), &road));
    }

    #[test]
    fn kind_parse() {
        assert_eq!("A".parse::<ScenarioKind>().unwrap(), ScenarioKind::TypeA);
        assert_eq!(
            "cutout".parse::<ScenarioKind>().unwrap(),
            ScenarioKind::Cutout
        );
        assert!("zzz".parse::<ScenarioKind>().is_err());
    }
}
