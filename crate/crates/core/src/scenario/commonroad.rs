//! Read-only importer for the straight-highway subset of the CommonRoad XML
//! format: parallel straight lanelets along +x, dynamic obstacles with state
//! lists and a single planning problem.
//!
//! Obstacle states are resampled onto the scenario grid by linear
//! interpolation (nearest sample for heading). Obstacles that appear late or
//! leave early are extended with constant velocity so every track spans the
//! whole scenario.

use roxmltree::{Document, Node};

use super::{
    ChallengerTrack, EgoStart, GoalRegion, Scenario, ScenarioKind, ScenarioMeta, TrajectoryPoint,
};
use crate::error::{Error, Result};
use crate::road::{lane_of, RoadNetwork, Vec2, VehicleParams, VehicleState};

/// Lateral tolerance for "straight" and "parallel", meters.
const GEOM_TOL: f64 = 0.05;
const DEFAULT_DT: f64 = 0.1;

pub fn import_commonroad_xml(bytes: &[u8]) -> Result<Scenario> {
    import_commonroad_xml_with_dt(bytes, DEFAULT_DT)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    x: f64,
    y: f64,
    v: f64,
    psi: f64,
}

#[derive(Debug)]
struct Lanelet {
    id: String,
    y_lo: f64,
    y_hi: f64,
    x_lo: f64,
    x_hi: f64,
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn req_child<'a, 'i>(node: Node<'a, 'i>, name: &str, path: &str) -> Result<Node<'a, 'i>> {
    child(node, name).ok_or_else(|| Error::schema(format!("{path}.{name}"), "missing element"))
}

fn parse_f64(node: Node, path: &str) -> Result<f64> {
    let text = node.text().unwrap_or("").trim();
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::schema(path, format!("expected a finite number, got `{text}`")))
}

/// `<exact>` value, or the midpoint of an `<intervalStart>/<intervalEnd>` pair.
fn exact_or_mid(node: Node, path: &str) -> Result<f64> {
    if let Some(e) = child(node, "exact") {
        return parse_f64(e, &format!("{path}.exact"));
    }
    let lo = parse_f64(
        req_child(node, "intervalStart", path)?,
        &format!("{path}.intervalStart"),
    )?;
    let hi = parse_f64(
        req_child(node, "intervalEnd", path)?,
        &format!("{path}.intervalEnd"),
    )?;
    Ok(0.5 * (lo + hi))
}

fn parse_point(node: Node, path: &str) -> Result<Vec2> {
    let x = parse_f64(req_child(node, "x", path)?, &format!("{path}.x"))?;
    let y = parse_f64(req_child(node, "y", path)?, &format!("{path}.y"))?;
    Ok(Vec2::new(x, y))
}

fn parse_bound(node: Node, path: &str) -> Result<Vec<Vec2>> {
    let pts = node
        .children()
        .filter(|c| c.has_tag_name("point"))
        .enumerate()
        .map(|(i, p)| parse_point(p, &format!("{path}.point[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    if pts.len() < 2 {
        return Err(Error::schema(path, "bound needs at least 2 points"));
    }
    Ok(pts)
}

fn parse_lanelet(node: Node) -> Result<Lanelet> {
    let id = node.attribute("id").unwrap_or("?").to_string();
    let path = format!("lanelet[{id}]");
    let left = parse_bound(
        req_child(node, "leftBound", &path)?,
        &format!("{path}.leftBound"),
    )?;
    let right = parse_bound(
        req_child(node, "rightBound", &path)?,
        &format!("{path}.rightBound"),
    )?;
    let mut ys = Vec::with_capacity(2);
    for (name, bound) in [("leftBound", &left), ("rightBound", &right)] {
        let y0 = bound[0].y;
        if bound.iter().any(|p| (p.y - y0).abs() > GEOM_TOL) {
            return Err(Error::Unsupported(format!(
                "{path}.{name} is not a straight line along x (curved or rotated lanelet)"
            )));
        }
        if bound.windows(2).any(|w| w[1].x <= w[0].x) {
            return Err(Error::Unsupported(format!(
                "{path}.{name} does not run in +x direction"
            )));
        }
        ys.push(y0);
    }
    let (x_lo, x_hi) = (
        left[0].x.max(right[0].x),
        left[left.len() - 1].x.min(right[right.len() - 1].x),
    );
    Ok(Lanelet {
        id,
        y_lo: ys[0].min(ys[1]),
        y_hi: ys[0].max(ys[1]),
        x_lo,
        x_hi,
    })
}

/// Merge lanelets into lanes by lateral band and check they form a
/// contiguous stack of equal-width lanes.
fn build_road(lanelets: &[Lanelet]) -> Result<(RoadNetwork, Vec<(String, usize)>)> {
    if lanelets.is_empty() {
        return Err(Error::schema("lanelet", "document has no lanelets"));
    }
    let mut bands: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut ids: Vec<(String, usize)> = Vec::new();
    let mut sorted: Vec<&Lanelet> = lanelets.iter().collect();
    sorted.sort_by(|a, b| a.y_lo.total_cmp(&b.y_lo));
    for l in sorted {
        let idx = match bands
            .iter()
            .position(|b| (b.0 - l.y_lo).abs() <= GEOM_TOL && (b.1 - l.y_hi).abs() <= GEOM_TOL)
        {
            Some(i) => {
                bands[i].2 = bands[i].2.min(l.x_lo);
                bands[i].3 = bands[i].3.max(l.x_hi);
                i
            }
            None => {
                bands.push((l.y_lo, l.y_hi, l.x_lo, l.x_hi));
                bands.len() - 1
            }
        };
        ids.push((l.id.clone(), idx));
    }
    let width = bands[0].1 - bands[0].0;
    for (i, b) in bands.iter().enumerate() {
        if ((b.1 - b.0) - width).abs() > GEOM_TOL {
            return Err(Error::Unsupported(format!(
                "lanes of unequal width ({} vs {width})",
                b.1 - b.0
            )));
        }
        if i > 0 && (b.0 - bands[i - 1].1).abs() > GEOM_TOL {
            return Err(Error::Unsupported(
                "lanelets are not laterally contiguous".into(),
            ));
        }
        if (b.2 - bands[0].2).abs() > 1.0 || (b.3 - bands[0].3).abs() > 1.0 {
            return Err(Error::Unsupported(
                "lanes do not share a common longitudinal extent".into(),
            ));
        }
    }
    if bands.len() < 2 {
        return Err(Error::Unsupported("single-lane roads".into()));
    }
    let x_lo = bands.iter().map(|b| b.2).fold(f64::NEG_INFINITY, f64::max);
    let x_hi = bands.iter().map(|b| b.3).fold(f64::INFINITY, f64::min);
    let road = RoadNetwork {
        lane_count: bands.len(),
        lane_width: width,
        length: x_hi - x_lo,
        origin: Vec2::new(x_lo, bands[0].0),
    };
    road.validate()?;
    Ok((road, ids))
}

fn parse_state(node: Node, step_size: f64, path: &str) -> Result<Sample> {
    let pos = req_child(node, "position", path)?;
    let point = req_child(pos, "point", &format!("{path}.position"))?;
    let p = parse_point(point, &format!("{path}.position.point"))?;
    let time = req_child(node, "time", path)?;
    let step = exact_or_mid(time, &format!("{path}.time"))?;
    let v = exact_or_mid(
        req_child(node, "velocity", path)?,
        &format!("{path}.velocity"),
    )?;
    let psi = exact_or_mid(
        req_child(node, "orientation", path)?,
        &format!("{path}.orientation"),
    )?;
    Ok(Sample {
        t: step * step_size,
        x: p.x,
        y: p.y,
        v,
        psi,
    })
}

/// Resample onto `t_k = k * dt`, k = 0..=n.
fn resample(samples: &[Sample], dt: f64, n: usize) -> Vec<TrajectoryPoint> {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    let extrapolate = |s: &Sample, t: f64| TrajectoryPoint {
        t,
        s_x: s.x + s.v * s.psi.cos() * (t - s.t),
        s_y: s.y + s.v * s.psi.sin() * (t - s.t),
        v: s.v,
        psi: s.psi,
    };
    let mut out = Vec::with_capacity(n + 1);
    let mut j = 0;
    for k in 0..=n {
        let t = k as f64 * dt;
        if t <= first.t {
            out.push(extrapolate(&first, t));
            continue;
        }
        if t >= last.t {
            out.push(extrapolate(&last, t));
            continue;
        }
        while samples[j + 1].t < t {
            j += 1;
        }
        let (a, b) = (samples[j], samples[j + 1]);
        let w = (t - a.t) / (b.t - a.t);
        out.push(TrajectoryPoint {
            t,
            s_x: a.x + (b.x - a.x) * w,
            s_y: a.y + (b.y - a.y) * w,
            v: a.v + (b.v - a.v) * w,
            psi: if w < 0.5 { a.psi } else { b.psi },
        });
    }
    out
}

/// Import a CommonRoad document, resampling obstacle trajectories to `dt`.
pub fn import_commonroad_xml_with_dt(bytes: &[u8], dt: f64) -> Result<Scenario> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be finite and > 0"));
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Xml(e.to_string()))?;
    let doc = Document::parse(text).map_err(|e| Error::Xml(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("commonRoad") {
        return Err(Error::schema(
            "commonRoad",
            "root element must be <commonRoad>",
        ));
    }
    let step_size = root
        .attribute("timeStepSize")
        .ok_or_else(|| Error::schema("commonRoad@timeStepSize", "missing attribute"))?
        .parse::<f64>()
        .ok()
        .filter(|v| *v > 0.0 && v.is_finite())
        .ok_or_else(|| Error::schema("commonRoad@timeStepSize", "must be a positive number"))?;
    let id = root
        .attribute("benchmarkID")
        .unwrap_or("commonroad")
        .to_string();

    for unsupported in ["intersection", "trafficSign", "trafficLight"] {
        if child(root, unsupported).is_some() {
            return Err(Error::Unsupported(format!("<{unsupported}> elements")));
        }
    }

    let lanelets = root
        .children()
        .filter(|c| c.has_tag_name("lanelet"))
        .map(parse_lanelet)
        .collect::<Result<Vec<_>>>()?;
    let (road, lanelet_lanes) = build_road(&lanelets)?;

    let mut problems = root
        .children()
        .filter(|c| c.has_tag_name("planningProblem"));
    let problem = problems
        .next()
        .ok_or_else(|| Error::schema("planningProblem", "missing element"))?;
    if problems.next().is_some() {
        return Err(Error::Unsupported("more than one planning problem".into()));
    }

    let init = req_child(problem, "initialState", "planningProblem")?;
    let ego = parse_state(init, step_size, "planningProblem.initialState")?;
    if ego.psi.abs() > 0.5 {
        return Err(Error::Unsupported(format!(
            "ego heading {} rad: only +x travel is supported",
            ego.psi
        )));
    }
    let ego_lane = lane_of(ego.y, &road).ok_or_else(|| {
        Error::schema(
            "planningProblem.initialState.position",
            "ego starts off the road",
        )
    })?;

    let goal_state = req_child(problem, "goalState", "planningProblem")?;
    let goal_pos = req_child(goal_state, "position", "planningProblem.goalState")?;
    let goal = if let Some(rect) = child(goal_pos, "rectangle") {
        let path = "planningProblem.goalState.position.rectangle";
        let len = parse_f64(req_child(rect, "length", path)?, &format!("{path}.length"))?;
        let wid = parse_f64(req_child(rect, "width", path)?, &format!("{path}.width"))?;
        let c = parse_point(req_child(rect, "center", path)?, &format!("{path}.center"))?;
        let lanes: Vec<usize> = (0..road.lane_count)
            .filter(|&l| (road.centerline_y(l) - c.y).abs() <= 0.5 * wid)
            .collect();
        GoalRegion {
            s_x_min: c.x - 0.5 * len,
            s_x_max: c.x + 0.5 * len,
            allowed_lanes: if lanes.is_empty() || lanes.len() == road.lane_count {
                None
            } else {
                Some(lanes)
            },
        }
    } else {
        let refs: Vec<&str> = goal_pos
            .children()
            .filter(|c| c.has_tag_name("lanelet"))
            .filter_map(|c| c.attribute("ref"))
            .collect();
        if refs.is_empty() {
            return Err(Error::Unsupported(
                "goal position must be a rectangle or lanelet references".into(),
            ));
        }
        let mut lanes = Vec::new();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in refs {
            let (i, lane) = lanelet_lanes
                .iter()
                .enumerate()
                .find(|(_, (id, _))| id == r)
                .map(|(i, (_, lane))| (i, *lane))
                .ok_or_else(|| {
                    Error::schema(
                        "planningProblem.goalState.position.lanelet",
                        format!("unknown lanelet `{r}`"),
                    )
                })?;
            lo = lo.min(lanelets[i].x_lo);
            hi = hi.max(lanelets[i].x_hi);
            if !lanes.contains(&lane) {
                lanes.push(lane);
            }
        }
        lanes.sort_unstable();
        GoalRegion {
            s_x_min: lo,
            s_x_max: hi,
            allowed_lanes: Some(lanes),
        }
    };

    let mut obstacles: Vec<(String, f64, f64, Vec<Sample>)> = Vec::new();
    let mut t_end: f64 = 0.0;
    for (oi, node) in root
        .children()
        .filter(|c| c.has_tag_name("dynamicObstacle"))
        .enumerate()
    {
        let oid = node
            .attribute("id")
            .map(str::to_string)
            .unwrap_or_else(|| oi.to_string());
        let path = format!("dynamicObstacle[{oid}]");
        let shape = req_child(node, "shape", &path)?;
        let rect = child(shape, "rectangle")
            .ok_or_else(|| Error::Unsupported(format!("{path}: non-rectangular shape")))?;
        let len = parse_f64(
            req_child(rect, "length", &path)?,
            &format!("{path}.shape.length"),
        )?;
        let wid = parse_f64(
            req_child(rect, "width", &path)?,
            &format!("{path}.shape.width"),
        )?;
        let mut samples = vec![parse_state(
            req_child(node, "initialState", &path)?,
            step_size,
            &format!("{path}.initialState"),
        )?];
        if let Some(traj) = child(node, "trajectory") {
            for (si, st) in traj
                .children()
                .filter(|c| c.has_tag_name("state"))
                .enumerate()
            {
                samples.push(parse_state(
                    st,
                    step_size,
                    &format!("{path}.trajectory.state[{si}]"),
                )?);
            }
        }
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::schema(
                format!("{path}.trajectory"),
                "duplicate time steps",
            ));
        }
        t_end = t_end.max(samples[samples.len() - 1].t);
        obstacles.push((oid, len, wid, samples));
    }

    let mut horizon = t_end;
    if let Some(time) = child(goal_state, "time") {
        if let Some(e) = child(time, "intervalEnd").or_else(|| child(time, "exact")) {
            horizon = horizon.max(parse_f64(e, "planningProblem.goalState.time")? * step_size);
        }
    }
    let n = (horizon / dt + 1e-9).floor() as usize;
    if n < 1 {
        return Err(Error::schema(
            "dynamicObstacle",
            "scenario shorter than one step",
        ));
    }
    let duration = n as f64 * dt;

    let challengers = obstacles
        .into_iter()
        .map(|(oid, length, width, samples)| ChallengerTrack {
            id: oid,
            length,
            width,
            points: resample(&samples, dt, n),
        })
        .collect();

    let scenario = Scenario {
        id,
        kind: ScenarioKind::RealRoad,
        road,
        dt,
        duration,
        ego_start: EgoStart {
            state: VehicleState {
                s_x: ego.x,
                s_y: ego.y,
                v: ego.v.max(0.0),
                delta: 0.0,
                psi: ego.psi,
            },
            lane: ego_lane,
        },
        ego_params: VehicleParams::default(),
        goal,
        challengers,
        meta: ScenarioMeta {
            easy: false,
            seed: None,
            source: Some("commonroad-xml".into()),
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lanelet(id: u32, y_lo: f64, y_hi: f64, x1: f64) -> String {
        format!(
            r#"<lanelet id="{id}">
  <leftBound><point><x>0</x><y>{y_hi}</y></point><point><x>{x1}</x><y>{y_hi}</y></point></leftBound>
  <rightBound><point><x>0</x><y>{y_lo}</y></point><point><x>{x1}</x><y>{y_lo}</y></point></rightBound>
</lanelet>"#
        )
    }

    fn state(step: u32, x: f64, y: f64, v: f64) -> String {
        format!(
            "<state><position><point><x>{x}</x><y>{y}</y></point></position><orientation><exact>0</exact></orientation><time><exact>{step}</exact></time><velocity><exact>{v}</exact></velocity></state>"
        )
    }

    /// Three lanes, one obstacle sampled at 0.04 s for 2 s, goal rectangle.
    pub(crate) fn fixture(extra_lanelet: &str) -> String {
        let mut traj = String::new();
        for k in 1..=50u32 {
            let t = k as f64 * 0.04;
            traj.push_str(&state(k, 80.0 + 20.0 * t + 0.5 * t * t, 5.25, 20.0 + t));
        }
        format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
<commonRoad commonRoadVersion="2020a" benchmarkID="DEU_Fixture-1_1_T-1" timeStepSize="0.04">
{l1}
{l2}
{l3}
{extra_lanelet}
<dynamicObstacle id="100">
  <type>car</type>
  <shape><rectangle><length>4.6</length><width>1.9</width></rectangle></shape>
  <initialState><position><point><x>80</x><y>5.25</y></point></position><orientation><exact>0</exact></orientation><time><exact>0</exact></time><velocity><exact>20</exact></velocity></initialState>
  <trajectory>{traj}</trajectory>
</dynamicObstacle>
<planningProblem id="1">
  <initialState><position><point><x>20</x><y>5.25</y></point></position><velocity><exact>25</exact></velocity><orientation><exact>0</exact></orientation><time><exact>0</exact></time><yawRate><exact>0</exact></yawRate><slipAngle><exact>0</exact></slipAngle></initialState>
  <goalState><position><rectangle><length>40</length><width>10.5</width><center><x>380</x><y>5.25</y></center><orientation>0</orientation></rectangle></position><time><intervalStart>0</intervalStart><intervalEnd>50</intervalEnd></time></goalState>
</planningProblem>
</commonRoad>"#,
            l1 = lanelet(1, 0.0, 3.5, 500.0),
            l2 = lanelet(2, 3.5, 7.0, 500.0),
            l3 = lanelet(3, 7.0, 10.5, 500.0),
        )
    }

    #[test]
    fn imports_three_lane_fixture() {
        let s = import_commonroad_xml(fixture("").as_bytes()).unwrap();
        assert_eq!(s.road.lane_count, 3);
        assert!((s.road.lane_width - 3.5).abs() < 1e-12);
        assert_eq!(s.challengers.len(), 1);
        assert_eq!(s.ego_start.lane, 1);
        assert_eq!(s.kind, ScenarioKind::RealRoad);
        assert!((s.duration - 2.0).abs() < 1e-9);
        assert_eq!(s.goal.allowed_lanes, None);
        assert_eq!((s.goal.s_x_min, s.goal.s_x_max), (360.0, 400.0));
    }

    #[test]
    fn resamples_to_scenario_grid() {
        let s = import_commonroad_xml(fixture("").as_bytes()).unwrap();
        let pts = &s.challengers[0].points;
        assert_eq!(pts.len(), 21);
        for (k, p) in pts.iter().enumerate() {
            assert!((p.t - k as f64 * 0.1).abs() < 1e-12);
        }
        // t = 0.1 lies between the 0.08 and 0.12 samples
        let x = |t: f64| 80.0 + 20.0 * t + 0.5 * t * t;
        let expected = 0.5 * (x(0.08) + x(0.12));
        assert!(
            (pts[1].s_x - expected).abs() < 1e-9,
            "{} vs {expected}",
            pts[1].s_x
        );
        assert!((pts[1].v - 20.1).abs() < 1e-9);
    }

    #[test]
    fn curved_lanelet_is_unsupported() {
        let curved = r#"<lanelet id="9">
  <leftBound><point><x>0</x><y>14</y></point><point><x>250</x><y>15</y></point><point><x>500</x><y>17</y></point></leftBound>
  <rightBound><point><x>0</x><y>10.5</y></point><point><x>250</x><y>11.5</y></point><point><x>500</x><y>13.5</y></point></rightBound>
</lanelet>"#;
        let err = import_commonroad_xml(fixture(curved).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err}");
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(
            import_commonroad_xml(b"<notxml"),
            Err(Error::Xml(_))
        ));
        let no_problem = fixture("").replace("planningProblem", "somethingElse");
        assert!(import_commonroad_xml(no_problem.as_bytes()).is_err());
    }
}
