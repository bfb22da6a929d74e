mod dataset;
mod replay;
mod run;

pub use dataset::{filter, generate, validate, FilterEntry, FilterList};
pub use replay::{render_svg, render_text, replay};
pub use run::{eval, simulate, train};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use sad_sim_core::agents::Checkpoint;
use sad_sim_core::eval::{EvalPolicy, PolicySource};
use sad_sim_core::factory::Manifest;
use sad_sim_core::scenario::{import_commonroad_xml, load_json, Scenario};

use crate::error::{CliError, CliResult};

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::Data(anyhow::anyhow!("reading {}: {e}", path.display())))
}

/// Load a JSON scenario, or CommonRoad XML by `.xml` extension.
pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let bytes = read_input(path)?;
    let s = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("xml") => import_commonroad_xml(&bytes)?,
        _ => load_json(&bytes)?,
    };
    Ok(s)
}

pub(crate) fn is_manifest(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with("manifest.json"))
}

/// Replace each manifest path by the scenario files it lists (train then
/// test). A manifest that cannot be read is passed through so the caller
/// reports it.
pub(crate) fn expand_paths(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        match is_manifest(p).then(|| Manifest::load(p)) {
            Some(Ok(m)) => {
                let dir = p.parent().unwrap_or(Path::new("."));
                out.extend(m.train.iter().chain(&m.test).map(|e| dir.join(&e.path)));
            }
            _ => out.push(p.clone()),
        }
    }
    out
}

/// `maintain`, `random`, a checkpoint path, each optionally as `label=...`.
pub fn parse_policy(arg: &str) -> CliResult<EvalPolicy> {
    let (label, what) = match arg.split_once('=') {
        Some((l, w)) if !l.is_empty() => (Some(l.to_string()), w),
        _ => (None, arg),
    };
    let (default_label, source) = match what {
        "maintain" => ("maintain".to_string(), PolicySource::Maintain),
        "random" => ("random".to_string(), PolicySource::Random),
        path if Path::new(path).is_file() => {
            let ck = Checkpoint::load(path)?;
            let src = PolicySource::Trained(Arc::new(ck.model));
            (src.tag().as_str().to_string(), src)
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown policy `{other}` (not a tag or checkpoint file)"
            )))
        }
    };
    Ok(EvalPolicy {
        label: label.unwrap_or(default_label),
        source,
    })
}
