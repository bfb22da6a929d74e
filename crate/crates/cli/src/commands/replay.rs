use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use sad_sim_core::env::{read_trace, TraceRecord};
use sad_sim_core::road::{RoadNetwork, VehicleParams};

use super::load_scenario;
use crate::error::{CliError, CliResult};
use crate::{ReplayArgs, ReplayFormat};

/// One line per sub-step; values are printed in full precision.
pub fn render_text(records: &[TraceRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let e = &r.ego;
        let _ = write!(
            s,
            "step {} t {} ego {} {} {} {}",
            r.step, r.t, e.s_x, e.s_y, e.psi, e.v
        );
        if let Some([lat, lon]) = r.action {
            let _ = write!(s, " action {lat} {lon}");
        }
        for (id, x, y, psi) in &r.challengers {
            let _ = write!(s, " | {id} {x} {y} {psi}");
        }
        if let Some(t) = r.termination {
            let _ = write!(s, " end {t}");
        }
        s.push('\n');
    }
    s
}

const VIEW_BEHIND: f64 = 40.0;
const VIEW_AHEAD: f64 = 80.0;
const PX_PER_M: f64 = 8.0;

/// Vehicle box at pose `(x, y, psi)` with size `(length, width)`.
fn rect(
    s: &mut String,
    (x, y, psi): (f64, f64, f64),
    (len, wid): (f64, f64),
    fill: &str,
    id: &str,
) {
    let _ = writeln!(
        s,
        r#"<rect id="{id}" x="{}" y="{}" width="{len}" height="{wid}" fill="{fill}" transform="translate({x} {y}) rotate({})"/>"#,
        -len / 2.0,
        -wid / 2.0,
        psi.to_degrees()
    );
}

/// One SVG frame in world coordinates: the outer group maps metres to
/// pixels with y pointing up, centred on the ego.
pub fn render_svg(
    r: &TraceRecord,
    road: &RoadNetwork,
    ego: &VehicleParams,
    sizes: &HashMap<String, (f64, f64)>,
) -> String {
    let width = (VIEW_BEHIND + VIEW_AHEAD) * PX_PER_M;
    let margin = 2.0;
    let height = (road.y_max() - road.y_min() + 2.0 * margin) * PX_PER_M;
    let x0 = r.ego.s_x - VIEW_BEHIND;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, "<title>step {} t {}</title>", r.step, r.t);
    let _ = writeln!(
        s,
        r#"<g transform="translate({} {}) scale({PX_PER_M} {})">"#,
        -x0 * PX_PER_M,
        (road.y_max() + margin) * PX_PER_M,
        -PX_PER_M
    );
    let _ = writeln!(
        s,
        r##"<rect x="{x0}" y="{}" width="{}" height="{}" fill="#555"/>"##,
        road.y_min(),
        VIEW_BEHIND + VIEW_AHEAD,
        road.y_max() - road.y_min()
    );
    for k in 1..road.lane_count {
        let y = road.y_min() + k as f64 * road.lane_width;
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#eee" stroke-width="0.15" stroke-dasharray="3 3"/>"##,
            x0 + VIEW_BEHIND + VIEW_AHEAD
        );
    }
    for (id, x, y, psi) in &r.challengers {
        let (l, w) = sizes.get(id).copied().unwrap_or((4.5, 1.8));
        rect(&mut s, (*x, *y, *psi), (l, w), "#d33", id);
    }
    let pose = (r.ego.s_x, r.ego.s_y, r.ego.psi);
    rect(&mut s, pose, (ego.length, ego.width), "#27d", "ego");
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn replay(a: &ReplayArgs, out: &mut dyn Write) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.trace)
        .map_err(|e| CliError::Data(anyhow::anyhow!("reading {}: {e}", a.trace.display())))?;
    let records = read_trace(&text)?;
    match a.format {
        ReplayFormat::Text => out.write_all(render_text(&records).as_bytes())?,
        ReplayFormat::Svg => {
            let dir = a
                .out
                .as_ref()
                .ok_or_else(|| CliError::usage("--format svg needs --out DIR"))?;
            let (road, ego, sizes) = match &a.scenario {
                Some(p) => {
                    let s = load_scenario(p)?;
                    let sizes = s
                        .challengers
                        .iter()
                        .map(|c| (c.id.clone(), (c.length, c.width)))
                        .collect();
                    (s.road, s.ego_params, sizes)
                }
                None => (
                    RoadNetwork::default(),
                    VehicleParams::default(),
                    HashMap::new(),
                ),
            };
            std::fs::create_dir_all(dir)?;
            for (i, r) in records.iter().enumerate() {
                std::fs::write(
                    dir.join(format!("frame_{i:05}.svg")),
                    render_svg(r, &road, &ego, &sizes),
                )?;
            }
            writeln!(out, "{} frame(s) in {}", records.len(), dir.display())?;
        }
    }
    Ok(())
}
