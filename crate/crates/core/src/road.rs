//! Straight multi-lane highway geometry, kinematic bicycle integration and
//! oriented-rectangle collision/offroad predicates.
//!
//! Lanes are indexed from 0 (rightmost, lowest `y`) upwards. The road runs
//! along +x, so Frenet and Cartesian coordinates coincide.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub lane_count: usize,
    pub lane_width: f64,
    pub length: f64,
    pub origin: Vec2,
}

impl Default for RoadNetwork {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.5,
            length: 1000.0,
            origin: Vec2::new(0.0, 0.0),
        }
    }
}

impl RoadNetwork {
    pub fn new(lane_count: usize, lane_width: f64, length: f64) -> Result<Self> {
        let road = Self {
            lane_count,
            lane_width,
            length,
            ..Self::default()
        };
        road.validate()?;
        Ok(road)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lane_count < 2 {
            return Err(Error::param("road.lane_count", "must be >= 2"));
        }
        if !(self.lane_width.is_finite() && self.lane_width > 0.0) {
            return Err(Error::param("road.lane_width", "must be finite and > 0"));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::param("road.length", "must be finite and > 0"));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite()) {
            return Err(Error::param("road.origin", "must be finite"));
        }
        Ok(())
    }

    pub fn centerline_y(&self, lane: usize) -> f64 {
        self.origin.y + (lane as f64 + 0.5) * self.lane_width
    }

    pub fn y_min(&self) -> f64 {
        self.origin.y
    }

    pub fn y_max(&self) -> f64 {
        self.origin.y + self.lane_count as f64 * self.lane_width
    }

    pub fn x_min(&self) -> f64 {
        self.origin.x
    }

    pub fn x_max(&self) -> f64 {
        self.origin.x + self.length
    }

    pub fn has_lane(&self, lane: i64) -> bool {
        lane >= 0 && (lane as usize) < self.lane_count
    }
}

/// Lane containing lateral position `s_y`. Shared boundaries belong to the
/// higher-index lane; the outer edges are part of the carriageway.
pub fn lane_of(s_y: f64, road: &RoadNetwork) -> Option<usize> {
    if !s_y.is_finite() || s_y < road.y_min() || s_y > road.y_max() {
        return None;
    }
    let idx = ((s_y - road.origin.y) / road.lane_width).floor() as usize;
    Some(idx.min(road.lane_count - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub length: f64,
    pub width: f64,
    pub wheelbase: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub delta_max: f64,
    pub vdelta_max: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.8,
            wheelbase: 2.9,
            a_min: -9.0,
            a_max: 3.0,
            delta_max: 0.6,
            vdelta_max: 0.4,
            v_max: 50.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.length,
            self.width,
            self.wheelbase,
            self.a_min,
            self.a_max,
            self.delta_max,
            self.vdelta_max,
            self.v_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vehicle params"));
        }
        if !(self.length > self.wheelbase && self.wheelbase > 0.0) {
            return Err(Error::param(
                "params.wheelbase",
                "need length > wheelbase > 0",
            ));
        }
        if self.width <= 0.0 {
            return Err(Error::param("params.width", "must be > 0"));
        }
        if !(self.a_min < 0.0 && 0.0 < self.a_max) {
            return Err(Error::param("params.a_min/a_max", "need a_min < 0 < a_max"));
        }
        if self.delta_max <= 0.0 || self.vdelta_max <= 0.0 || self.v_max <= 0.0 {
            return Err(Error::param(
                "params.delta_max/vdelta_max/v_max",
                "must be > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub s_x: f64,
    pub s_y: f64,
    pub v: f64,
    pub delta: f64,
    pub psi: f64,
}

impl VehicleState {
    pub fn new(s_x: f64, s_y: f64, v: f64) -> Self {
        Self {
            s_x,
            s_y,
            v,
            delta: 0.0,
            psi: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s_x.is_finite()
            && self.s_y.is_finite()
            && self.v.is_finite()
            && self.delta.is_finite()
            && self.psi.is_finite()
    }

    pub fn footprint(&self, params: &VehicleParams) -> Footprint {
        Footprint::new(
            Vec2::new(self.s_x, self.s_y),
            self.psi,
            params.length,
            params.width,
        )
    }
}

/// One explicit-Euler step of the kinematic bicycle model.
///
/// Positions and heading integrate with the pre-step speed and steering
/// angle. Commands are clamped to the actuator bounds in `params`; the
/// resulting speed is clamped to `[0, v_max]` and steering to
/// `±delta_max` after integration.
pub fn bicycle_step(
    state: &VehicleState,
    accel: f64,
    steer_rate: f64,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("state"));
    }
    if !accel.is_finite() || !steer_rate.is_finite() || !dt.is_finite() {
        return Err(Error::NonFinite("control or dt"));
    }
    if dt <= 0.0 {
        return Err(Error::param("dt", "must be > 0"));
    }
    let accel = accel.clamp(params.a_min, params.a_max);
    let steer_rate = steer_rate.clamp(-params.vdelta_max, params.vdelta_max);

    let VehicleState {
        s_x,
        s_y,
        v,
        delta,
        psi,
    } = *state;
    let (sin, cos) = psi.sin_cos();
    Ok(VehicleState {
        s_x: s_x + v * cos * dt,
        s_y: s_y + v * sin * dt,
        psi: wrap_angle(psi + v / params.wheelbase * delta.tan() * dt),
        v: (v + accel * dt).clamp(0.0, params.v_max),
        delta: (delta + steer_rate * dt).clamp(-params.delta_max, params.delta_max),
    })
}

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Footprint {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    /// Unit vectors along the length and width directions.
    pub fn axes(&self) -> [Vec2; 2] {
        let (s, c) = self.heading.sin_cos();
        [Vec2::new(c, s), Vec2::new(-s, c)]
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let [u, n] = self.axes();
        let l = u * self.half_length;
        let w = n * self.half_width;
        let c = self.center;
        [c + l + w, c - l + w, c - l - w, c + l - w]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let [u, n] = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.half_length && d.dot(n).abs() <= self.half_width
    }

    fn project(&self, axis: Vec2) -> (f64, f64) {
        let [u, n] = self.axes();
        let c = self.center.dot(axis);
        let r = self.half_length * u.dot(axis).abs() + self.half_width * n.dot(axis).abs();
        (c - r, c + r)
    }
}

/// Separating-axis test on closed rectangles; touching counts as overlap.
pub fn rectangles_overlap(a: &Footprint, b: &Footprint) -> bool {
    // cheap bounding-circle reject
    let ra = a.half_length.hypot(a.half_width);
    let rb = b.half_length.hypot(b.half_width);
    let d = b.center - a.center;
    if d.dot(d) > (ra + rb) * (ra + rb) {
        return false;
    }
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    for axis in [a0, a1, b0, b1] {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        if amax < bmin || bmax < amin {
            return false;
        }
    }
    true
}

/// True iff any corner lies strictly outside the carriageway.
pub fn offroad(fp: &Footprint, road: &RoadNetwork) -> bool {
    fp.corners().iter().any(|c| {
        c.y < road.y_min() || c.y > road.y_max() || c.x < road.x_min() || c.x > road.x_max()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(x: f64, y: f64, h: f64) -> Footprint {
        Footprint::new(Vec2::new(x, y), h, 4.5, 1.8)
    }

    #[test]
    fn straight_line_motion() {
        let p = VehicleParams::default();
        let s = VehicleState::new(0.0, 0.0, 10.0);
        let n = bicycle_step(&s, 0.0, 0.0, 0.1, &p).unwrap();
        assert_eq!(
            (n.s_x, n.s_y, n.v, n.delta, n.psi),
            (1.0, 0.0, 10.0, 0.0, 0.0)
        );
    }

    #[test]
    fn euler_velocity_update() {
        let p = VehicleParams::default();
        let s = VehicleState::new(0.0, 0.0, 10.0);
        let n = bicycle_step(&s, 2.0, 0.0, 0.1, &p).unwrap();
        assert_eq!(n.s_x, 1.0);
        assert!((n.v - 10.2).abs() < 1e-12);
        assert_eq!((n.s_y, n.delta, n.psi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_non_finite_and_bad_dt() {
        let p = VehicleParams::default();
        let s = VehicleState::new(0.0, 0.0, 10.0);
        assert!(bicycle_step(&s, f64::NAN, 0.0, 0.1, &p).is_err());
        assert!(bicycle_step(&s, 0.0, f64::INFINITY, 0.1, &p).is_err());
        assert!(bicycle_step(&s, 0.0, 0.0, 0.0, &p).is_err());
        let bad = VehicleState { v: f64::NAN, ..s };
        assert!(bicycle_step(&bad, 0.0, 0.0, 0.1, &p).is_err());
    }

    #[test]
    fn clamps_speed_and_steering() {
        let p = VehicleParams::default();
        let s = VehicleState {
            delta: 0.59,
            ..VehicleState::new(0.0, 0.0, 0.1)
        };
        let n = bicycle_step(&s, -9.0, 0.4, 0.1, &p).unwrap();
        assert_eq!(n.v, 0.0);
        assert_eq!(n.delta, p.delta_max);
        let fast = VehicleState::new(0.0, 0.0, 49.9);
        assert_eq!(bicycle_step(&fast, 3.0, 0.0, 0.1, &p).unwrap().v, p.v_max);
    }

    #[test]
    fn wrap_angle_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn overlap_basic_cases() {
        let a = fp(0.0, 0.0, 0.0);
        assert!(rectangles_overlap(&a, &a));
        assert!(!rectangles_overlap(&a, &fp(10.0, 0.0, 0.0)));
        // touching bumpers count
        assert!(rectangles_overlap(&a, &fp(4.5, 0.0, 0.0)));
        assert!(!rectangles_overlap(&a, &fp(4.5 + 1e-9, 0.0, 0.0)));
        // rotated corner poke: diagonal gap that axis-aligned boxes would miss
        let r = fp(4.4, 2.2, std::f64::consts::FRAC_PI_4);
        assert_eq!(rectangles_overlap(&a, &r), rectangles_overlap(&r, &a));
    }

    #[test]
    fn corners_form_rectangle() {
        let f = fp(3.0, -1.0, 0.7);
        let c = f.corners();
        let d1 = c[0] - c[2];
        let d2 = c[1] - c[3];
        assert!((d1.dot(d1) - d2.dot(d2)).abs() < 1e-12);
        assert!(((c[0] - c[1]).dot(c[1] - c[2])).abs() < 1e-12);
    }

    #[test]
    fn offroad_cases() {
        let road = RoadNetwork::default();
        assert!(!offroad(&fp(100.0, road.centerline_y(1), 0.0), &road));
        assert!(offroad(&fp(100.0, road.y_max(), 0.0), &road));
        assert!(offroad(&fp(100.0, road.y_min(), 0.0), &road));
        assert!(offroad(&fp(999.0, road.centerline_y(1), 0.0), &road));
        assert!(offroad(&fp(1.0, road.centerline_y(1), 0.0), &road));
    }

    #[test]
    fn lane_of_cases() {
        let road = RoadNetwork::default();
        let w = road.lane_width;
        assert_eq!(lane_of(0.5 * w, &road), Some(0));
        assert_eq!(lane_of(1.5 * w, &road), Some(1));
        assert_eq!(lane_of(-0.1, &road), None);
        assert_eq!(lane_of(w, &road), Some(1));
        assert_eq!(lane_of(2.0 * w, &road), Some(2));
        assert_eq!(lane_of(road.y_max(), &road), Some(2));
        assert_eq!(lane_of(road.y_max() + 1e-9, &road), None);
        assert_eq!(lane_of(f64::NAN, &road), None);
    }

    #[test]
    fn road_validation() {
        assert!(RoadNetwork::new(1, 3.5, 100.0).is_err());
        assert!(RoadNetwork::new(3, 0.0, 100.0).is_err());
        assert!(RoadNetwork::new(3, 3.5, -1.0).is_err());
        let r = RoadNetwork::new(3, 3.5, 1000.0).unwrap();
        assert_eq!(r.centerline_y(2), 8.75);
        assert!(VehicleParams::default().validate().is_ok());
        let bad = VehicleParams {
            wheelbase: 5.0,
            ..VehicleParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
