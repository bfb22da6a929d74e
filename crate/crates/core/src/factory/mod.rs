//! Synthetic critical-scenario generators (Type A, Type B, Cutout), the
//! decision-time filter and the dataset builder.
//!
//! Every critical draw is checked before it is returned: the challenger
//! trajectories must be drivable, a maintain-policy ego must collide with
//! the blocking challenger, and at least one scripted evasive policy must
//! reach the goal. Easy draws instead require the maintain policy to reach
//! the goal with the shield both on and off.

mod dataset;

pub use dataset::{
    build_dataset, load_manifest_scenarios, DatasetSpec, KindCounts, Manifest, ManifestEntry, Split,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{DrivingEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::pilot::{HighLevelAction, Lateral, Longitudinal, PilotConfig};
use crate::road::{RoadNetwork, VehicleParams, VehicleState};
use crate::scenario::{
    check_drivability, ChallengerTrack, EgoStart, GoalRegion, Scenario, ScenarioKind, ScenarioMeta,
    TrajectoryPoint,
};
use crate::sim::{rollout_policy, SimConfig, TerminationReason};

/// Scenarios whose maintain-policy collision comes sooner than this are
/// dropped: the ego would not have time to decide on and finish a lane
/// change.
pub const DECISION_TIME_THRESHOLD: f64 = 6.5;

/// Closed interval `[min, max]` drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn point(x: f64) -> Self {
        Self { min: x, max: x }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.gen_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::param(
                name,
                format!("need finite min <= max, got [{}, {}]", self.min, self.max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub seed: u64,
    /// Ego initial speed, m/s.
    pub ego_speed_range: Interval,
    /// Initial bumper-to-bumper gap to the nearest challenger, m.
    pub gap_range: Interval,
    /// Deceleration of the blocking challenger, m/s² (negative).
    pub challenger_decel_range: Interval,
    /// Duration of the cut-in / cut-out lateral move, s.
    pub cutin_lateral_duration: Interval,
    /// Delay before the blocking challenger starts braking, s. For Type B
    /// and Cutout it counts from the end of the lateral move.
    pub onset_delay_range: Interval,
    /// Time before a lateral move starts, s.
    pub lateral_start_range: Interval,
    /// Cutout only: gap between the near and the far challenger, m.
    pub second_gap_range: Interval,
    pub road: RoadNetwork,
    pub dt: f64,
    pub duration: f64,
    /// Ego start position along the road, m.
    pub ego_x0: f64,
    pub challenger_length: f64,
    pub challenger_width: f64,
    /// Relax imminence: the maintain policy must reach the goal instead.
    pub easy: bool,
    pub max_attempts: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            ego_speed_range: Interval::new(20.0, 35.0),
            gap_range: Interval::new(30.0, 80.0),
            challenger_decel_range: Interval::new(-8.0, -3.0),
            cutin_lateral_duration: Interval::new(2.0, 4.0),
            onset_delay_range: Interval::new(1.0, 6.0),
            lateral_start_range: Interval::new(0.5, 2.0),
            second_gap_range: Interval::new(15.0, 40.0),
            road: RoadNetwork::default(),
            dt: 0.1,
            duration: 20.0,
            ego_x0: 50.0,
            challenger_length: 4.5,
            challenger_width: 1.8,
            easy: false,
            max_attempts: 100,
        }
    }
}

impl GenParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        for (name, iv) in [
            ("ego_speed_range", self.ego_speed_range),
            ("gap_range", self.gap_range),
            ("challenger_decel_range", self.challenger_decel_range),
            ("cutin_lateral_duration", self.cutin_lateral_duration),
            ("onset_delay_range", self.onset_delay_range),
            ("lateral_start_range", self.lateral_start_range),
            ("second_gap_range", self.second_gap_range),
        ] {
            iv.check(name)?;
        }
        if self.ego_speed_range.min <= 0.0 {
            return Err(Error::param("ego_speed_range", "speeds must be > 0"));
        }
        if self.gap_range.min <= 0.0 || self.second_gap_range.min <= 0.0 {
            return Err(Error::param("gap_range", "gaps must be > 0"));
        }
        if self.challenger_decel_range.max >= 0.0 {
            return Err(Error::param(
                "challenger_decel_range",
                "decelerations must be < 0",
            ));
        }
        if self.cutin_lateral_duration.min <= 0.0 {
            return Err(Error::param("cutin_lateral_duration", "must be > 0"));
        }
        if self.onset_delay_range.min < 0.0 || self.lateral_start_range.min < 0.0 {
            return Err(Error::param("onset_delay_range", "delays must be >= 0"));
        }
        if !(self.dt > 0.0 && self.duration > 0.0) {
            return Err(Error::param("dt", "dt and duration must be > 0"));
        }
        let r = self.duration / self.dt;
        if (r - r.round()).abs() > 1e-6 {
            return Err(Error::param("duration", "must be a multiple of dt"));
        }
        if self.max_attempts == 0 {
            return Err(Error::param("max_attempts", "must be >= 1"));
        }
        Ok(())
    }
}

/// Speed profile: cruise at `v0` until `onset`, then change speed at rate
/// `accel` until `v_end`, then hold.
#[derive(Debug, Clone, Copy)]
struct SpeedProfile {
    x0: f64,
    v0: f64,
    onset: f64,
    accel: f64,
    v_end: f64,
}

impl SpeedProfile {
    fn cruise(x0: f64, v0: f64) -> Self {
        Self {
            x0,
            v0,
            onset: f64::INFINITY,
            accel: 0.0,
            v_end: v0,
        }
    }

    /// Position and speed at `t`.
    fn at(&self, t: f64) -> (f64, f64) {
        if t <= self.onset || self.accel == 0.0 {
            return (self.x0 + self.v0 * t, self.v0);
        }
        let x_on = self.x0 + self.v0 * self.onset;
        let tau = t - self.onset;
        let t_ramp = (self.v_end - self.v0) / self.accel;
        if tau <= t_ramp {
            (
                x_on + self.v0 * tau + 0.5 * self.accel * tau * tau,
                self.v0 + self.accel * tau,
            )
        } else {
            let ramp = (self.v_end * self.v_end - self.v0 * self.v0) / (2.0 * self.accel);
            (x_on + ramp + self.v_end * (tau - t_ramp), self.v_end)
        }
    }

    /// Where the profile ends up if it comes to a stop.
    fn rest_position(&self) -> f64 {
        self.x0
            + self.v0 * self.onset
            + (self.v_end * self.v_end - self.v0 * self.v0) / (2.0 * self.accel)
    }
}

/// Smooth lateral move from `y0` to `y1` over `[start, start + span]`:
/// a logistic curve rescaled to hit both ends exactly.
#[derive(Debug, Clone, Copy)]
struct LateralMove {
    y0: f64,
    y1: f64,
    start: f64,
    span: f64,
}

const LOGISTIC_STEEPNESS: f64 = 8.0;

impl LateralMove {
    fn hold(y: f64) -> Self {
        Self {
            y0: y,
            y1: y,
            start: 0.0,
            span: 1.0,
        }
    }

    fn end(&self) -> f64 {
        self.start + self.span
    }

    /// Lateral position and lateral speed at `t`.
    fn at(&self, t: f64) -> (f64, f64) {
        let u = ((t - self.start) / self.span).clamp(0.0, 1.0);
        if self.y0 == self.y1 || u <= 0.0 || u >= 1.0 {
            return (if u >= 1.0 { self.y1 } else { self.y0 }, 0.0);
        }
        let k = LOGISTIC_STEEPNESS;
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let (lo, hi) = (sig(-0.5 * k), sig(0.5 * k));
        let s = sig(k * (u - 0.5));
        let frac = (s - lo) / (hi - lo);
        let dfrac = k * s * (1.0 - s) / (hi - lo) / self.span;
        let d = self.y1 - self.y0;
        (self.y0 + d * frac, d * dfrac)
    }
}

fn build_track(id: &str, lon: SpeedProfile, lat: LateralMove, p: &GenParams) -> ChallengerTrack {
    let n = (p.duration / p.dt).round() as usize;
    ChallengerTrack {
        id: id.into(),
        length: p.challenger_length,
        width: p.challenger_width,
        points: (0..=n)
            .map(|k| {
                let t = k as f64 * p.dt;
                let (s_x, v) = lon.at(t);
                let (s_y, y_dot) = lat.at(t);
                let psi = if y_dot == 0.0 {
                    0.0
                } else {
                    y_dot.atan2(v.max(1e-6))
                };
                TrajectoryPoint {
                    t,
                    s_x,
                    s_y,
                    v,
                    psi,
                }
            })
            .collect(),
    }
}

struct Draw {
    scenario: Scenario,
    /// Index of the challenger a maintain ego must hit (critical draws).
    blocker: usize,
}

fn pick_lane(rng: &mut impl Rng, road: &RoadNetwork) -> usize {
    rng.gen_range(0..road.lane_count)
}

fn pick_side(rng: &mut impl Rng, lane: usize, road: &RoadNetwork) -> usize {
    let mut sides = Vec::with_capacity(2);
    if lane > 0 {
        sides.push(lane - 1);
    }
    if lane + 1 < road.lane_count {
        sides.push(lane + 1);
    }
    sides[rng.gen_range(0..sides.len())]
}

fn scenario_shell(
    kind: ScenarioKind,
    p: &GenParams,
    lane: usize,
    v: f64,
    challengers: Vec<ChallengerTrack>,
) -> Scenario {
    Scenario {
        id: format!("{}-{}", kind.as_str().to_ascii_lowercase(), p.seed),
        kind,
        road: p.road,
        dt: p.dt,
        duration: p.duration,
        ego_start: EgoStart {
            state: VehicleState::new(p.ego_x0, p.road.centerline_y(lane), v),
            lane,
        },
        ego_params: VehicleParams::default(),
        goal: GoalRegion::any_lane(0.0, 1.0),
        challengers,
        meta: ScenarioMeta {
            easy: p.easy,
            seed: Some(p.seed),
            source: Some("generator".into()),
        },
    }
}

/// Goal placement. Critical: just past where the blocker comes to rest, so
/// staying in lane can never reach it. Easy: a fixed travel time ahead at
/// the initial speed.
fn place_goal(s: &mut Scenario, blocker_rest: Option<f64>, rng: &mut impl Rng) {
    let ego = s.ego_start.state;
    let s_x_min = match blocker_rest {
        Some(x) => x + 0.5 * s.ego_params.length + 10.0,
        None => ego.s_x + ego.v * rng.gen_range(10.0..=13.0),
    };
    s.goal = GoalRegion::any_lane(s_x_min, s_x_min + 50.0);
}

fn easy_lead_profile(
    rng: &mut impl Rng,
    x0: f64,
    v: f64,
    p: &GenParams,
    onset: f64,
) -> SpeedProfile {
    let v0 = v + rng.gen_range(4.0..=10.0);
    SpeedProfile {
        x0,
        v0,
        onset,
        accel: p.challenger_decel_range.sample(rng),
        v_end: v + rng.gen_range(0.5..=2.0),
    }
}

fn draw_type_a(rng: &mut ChaCha8Rng, p: &GenParams) -> Draw {
    let road = p.road;
    let lane = pick_lane(rng, &road);
    let v = p.ego_speed_range.sample(rng);
    let gap = p.gap_range.sample(rng);
    let onset = p.onset_delay_range.sample(rng);
    let x0 = p.ego_x0 + gap + 0.5 * (VehicleParams::default().length + p.challenger_length);
    let lon = if p.easy {
        easy_lead_profile(rng, x0, v, p, onset)
    } else {
        SpeedProfile {
            x0,
            v0: v,
            onset,
            accel: p.challenger_decel_range.sample(rng),
            v_end: 0.0,
        }
    };
    let track = build_track("lead", lon, LateralMove::hold(road.centerline_y(lane)), p);
    let mut s = scenario_shell(ScenarioKind::TypeA, p, lane, v, vec![track]);
    place_goal(&mut s, (!p.easy).then(|| lon.rest_position()), rng);
    Draw {
        scenario: s,
        blocker: 0,
    }
}

fn draw_type_b(rng: &mut ChaCha8Rng, p: &GenParams) -> Draw {
    let road = p.road;
    let lane = pick_lane(rng, &road);
    let from = pick_side(rng, lane, &road);
    let v = p.ego_speed_range.sample(rng);
    let gap = p.gap_range.sample(rng);
    let lat = LateralMove {
        y0: road.centerline_y(from),
        y1: road.centerline_y(lane),
        start: p.lateral_start_range.sample(rng),
        span: p.cutin_lateral_duration.sample(rng),
    };
    let onset = lat.end() + p.onset_delay_range.sample(rng);
    let x0 = p.ego_x0 + gap + 0.5 * (VehicleParams::default().length + p.challenger_length);
    let lon = if p.easy {
        easy_lead_profile(rng, x0, v, p, onset)
    } else {
        SpeedProfile {
            x0,
            v0: v,
            onset,
            accel: p.challenger_decel_range.sample(rng),
            v_end: 0.0,
        }
    };
    let track = build_track("cutin", lon, lat, p);
    let mut s = scenario_shell(ScenarioKind::TypeB, p, lane, v, vec![track]);
    place_goal(&mut s, (!p.easy).then(|| lon.rest_position()), rng);
    Draw {
        scenario: s,
        blocker: 0,
    }
}

fn draw_cutout(rng: &mut ChaCha8Rng, p: &GenParams) -> Draw {
    let road = p.road;
    let lane = pick_lane(rng, &road);
    let to = pick_side(rng, lane, &road);
    let v = p.ego_speed_range.sample(rng);
    let gap = p.gap_range.sample(rng);
    let gap2 = p.second_gap_range.sample(rng);
    let ego_len = VehicleParams::default().length;
    let x_near = p.ego_x0 + gap + 0.5 * (ego_len + p.challenger_length);
    let x_far = x_near + gap2 + p.challenger_length;
    let lat = LateralMove {
        y0: road.centerline_y(lane),
        y1: road.centerline_y(to),
        start: p.lateral_start_range.sample(rng),
        span: p.cutin_lateral_duration.sample(rng),
    };
    let onset = lat.end() + p.onset_delay_range.sample(rng);
    let far = if p.easy {
        easy_lead_profile(rng, x_far, v, p, onset)
    } else {
        SpeedProfile {
            x0: x_far,
            v0: v,
            onset,
            accel: p.challenger_decel_range.sample(rng),
            v_end: 0.0,
        }
    };
    let near = build_track("near", SpeedProfile::cruise(x_near, v), lat, p);
    let far_track = build_track("far", far, LateralMove::hold(road.centerline_y(lane)), p);
    let mut s = scenario_shell(ScenarioKind::Cutout, p, lane, v, vec![near, far_track]);
    place_goal(&mut s, (!p.easy).then(|| far.rest_position()), rng);
    Draw {
        scenario: s,
        blocker: 1,
    }
}

fn maintain_outcome(s: &Scenario, shield: bool) -> Result<(TerminationReason, Option<usize>)> {
    if shield {
        let mut env = DrivingEnv::new(EnvConfig::default())?;
        env.reset(std::sync::Arc::new(s.clone()), 0)?;
        loop {
            let out = env.step(HighLevelAction::MAINTAIN)?;
            if let Some(r) = out.reason {
                return Ok((r, None));
            }
        }
    }
    let (t, _) = rollout_policy(
        s,
        10,
        &PilotConfig::default(),
        &SimConfig::default(),
        |_, _| HighLevelAction::MAINTAIN,
    )?;
    Ok((t.reason, t.challenger))
}

/// Scripted evasive policies: hard-brake at once, or a lane change to
/// either neighbor at one of the first ticks, cruising or accelerating.
fn scripted_solves(s: &Scenario) -> Result<bool> {
    let pilot = PilotConfig::default();
    let sim = SimConfig::default();
    let hb = HighLevelAction::new(Lateral::Center, Longitudinal::HardBrake);
    if rollout_policy(s, 10, &pilot, &sim, |_, _| hb)?.0.reason == TerminationReason::GoalReached {
        return Ok(true);
    }
    let lane = s.ego_start.lane;
    let mut sides = Vec::new();
    if lane + 1 < s.road.lane_count {
        sides.push(Lateral::Left);
    }
    if lane > 0 {
        sides.push(Lateral::Right);
    }
    for start in 0..4 {
        for &side in &sides {
            for lon in [Longitudinal::Maintain, Longitudinal::Accelerate] {
                let (t, _) =
                    rollout_policy(s, 10, &pilot, &sim, |tick, _| match tick.cmp(&start) {
                        std::cmp::Ordering::Less => HighLevelAction::MAINTAIN,
                        std::cmp::Ordering::Equal => HighLevelAction::new(side, lon),
                        std::cmp::Ordering::Greater => HighLevelAction::new(Lateral::Center, lon),
                    })?;
                if t.reason == TerminationReason::GoalReached {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn accept(d: &Draw, easy: bool) -> Result<bool> {
    let s = &d.scenario;
    if s.goal.s_x_max > s.road.length - 10.0
        || s.validate().is_err()
        || !check_drivability(s).feasible
    {
        return Ok(false);
    }
    if easy {
        return Ok(
            maintain_outcome(s, false)?.0 == TerminationReason::GoalReached
                && maintain_outcome(s, true)?.0 == TerminationReason::GoalReached,
        );
    }
    let (reason, hit) = maintain_outcome(s, false)?;
    if reason != TerminationReason::Collision || hit != Some(d.blocker) {
        return Ok(false);
    }
    scripted_solves(s)
}

fn generate(
    kind: ScenarioKind,
    p: &GenParams,
    draw: fn(&mut ChaCha8Rng, &GenParams) -> Draw,
) -> Result<Scenario> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    for _ in 0..p.max_attempts {
        let d = draw(&mut rng, p);
        if accept(&d, p.easy)? {
            return Ok(d.scenario);
        }
    }
    Err(Error::GenerationExhausted {
        kind: kind.as_str().into(),
        attempts: p.max_attempts,
    })
}

/// Ego behind a same-lane challenger that brakes to a stop.
pub fn generate_type_a(p: &GenParams) -> Result<Scenario> {
    generate(ScenarioKind::TypeA, p, draw_type_a)
}

/// Adjacent-lane challenger cuts in ahead of the ego, then brakes to a stop.
pub fn generate_type_b(p: &GenParams) -> Result<Scenario> {
    generate(ScenarioKind::TypeB, p, draw_type_b)
}

/// The ego's lead changes lane, revealing a second vehicle that brakes to
/// a stop.
pub fn generate_cutout(p: &GenParams) -> Result<Scenario> {
    generate(ScenarioKind::Cutout, p, draw_cutout)
}

pub fn generate_kind(kind: ScenarioKind, p: &GenParams) -> Result<Scenario> {
    match kind {
        ScenarioKind::TypeA => generate_type_a(p),
        ScenarioKind::TypeB => generate_type_b(p),
        ScenarioKind::Cutout => generate_cutout(p),
        other => Err(Error::param("kind", format!("no generator for {other}"))),
    }
}

/// Time until a maintain-policy ego collides, or infinity if it never does.
pub fn decision_time(s: &Scenario) -> Result<f64> {
    decision_time_with(s, &PilotConfig::default(), &SimConfig::default())
}

pub fn decision_time_with(s: &Scenario, pilot: &PilotConfig, sim: &SimConfig) -> Result<f64> {
    let (t, steps) = rollout_policy(s, 10, pilot, sim, |_, _| HighLevelAction::MAINTAIN)?;
    Ok(if t.reason == TerminationReason::Collision {
        steps as f64 * s.dt
    } else {
        f64::INFINITY
    })
}

/// Inclusive threshold test with a small allowance for `k * dt` rounding.
pub fn passes_filter(decision_time: f64) -> bool {
    decision_time >= DECISION_TIME_THRESHOLD - 1e-9
}

/// Split into (kept, rejected) by decision time.
pub fn filter_scenarios(list: Vec<Scenario>) -> Result<(Vec<Scenario>, Vec<Scenario>)> {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for s in list {
        if passes_filter(decision_time(&s)?) {
            kept.push(s);
        } else {
            rejected.push(s);
        }
    }
    Ok((kept, rejected))
}
