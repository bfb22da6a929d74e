use serde::{Deserialize, Serialize};

use super::{Scenario, TrajectoryPoint};
use crate::road::{offroad, rectangles_overlap, wrap_angle, Footprint, Vec2};

/// Per-step challenger acceleration envelope, m/s².
pub const ACCEL_BOUNDS: (f64, f64) = (-9.5, 4.0);
/// Per-step challenger yaw-rate bound, rad/s.
pub const YAW_RATE_BOUND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Violation {
    /// `a < b` lexicographically, so the report is independent of list order.
    Overlap {
        a: String,
        b: String,
        step: usize,
    },
    Offroad {
        id: String,
        step: usize,
    },
    Accel {
        id: String,
        step: usize,
        value: f64,
    },
    YawRate {
        id: String,
        step: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivabilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

fn footprint(p: &TrajectoryPoint, length: f64, width: f64) -> Footprint {
    Footprint::new(Vec2::new(p.s_x, p.s_y), p.psi, length, width)
}

/// Check that challenger trajectories are mutually collision-free, stay on
/// the road and respect the kinematic envelope. Sampling uses the track
/// grid, which `Scenario::validate` ties to the scenario dt.
pub fn check_drivability(scenario: &Scenario) -> DrivabilityReport {
    let mut violations = Vec::new();
    let tracks = &scenario.challengers;

    for tr in tracks {
        let dt = tr.dt();
        for (k, p) in tr.points.iter().enumerate() {
            if offroad(&footprint(p, tr.length, tr.width), &scenario.road) {
                violations.push(Violation::Offroad {
                    id: tr.id.clone(),
                    step: k,
                });
            }
        }
        for (k, w) in tr.points.windows(2).enumerate() {
            let accel = (w[1].v - w[0].v) / dt;
            if accel < ACCEL_BOUNDS.0 || accel > ACCEL_BOUNDS.1 {
                violations.push(Violation::Accel {
                    id: tr.id.clone(),
                    step: k,
                    value: accel,
                });
            }
            let yaw = wrap_angle(w[1].psi - w[0].psi) / dt;
            if yaw.abs() > YAW_RATE_BOUND {
                violations.push(Violation::YawRate {
                    id: tr.id.clone(),
                    step: k,
                    value: yaw,
                });
            }
        }
    }

    for i in 0..tracks.len() {
        for j in i + 1..tracks.len() {
            let (a, b) = (&tracks[i], &tracks[j]);
            let n = a.points.len().min(b.points.len());
            for k in 0..n {
                let fa = footprint(&a.points[k], a.length, a.width);
                let fb = footprint(&b.points[k], b.length, b.width);
                if rectangles_overlap(&fa, &fb) {
                    let (x, y) = if a.id <= b.id {
                        (&a.id, &b.id)
                    } else {
                        (&b.id, &a.id)
                    };
                    violations.push(Violation::Overlap {
                        a: x.clone(),
                        b: y.clone(),
                        step: k,
                    });
                }
            }
        }
    }

    violations.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    DrivabilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}
