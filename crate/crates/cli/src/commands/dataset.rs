use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

use sad_sim_core::factory::{build_dataset, decision_time, passes_filter, DatasetSpec, KindCounts};
use sad_sim_core::scenario::{check_drivability, ScenarioKind};

use super::{expand_paths, load_scenario};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{FilterArgs, GenerateArgs, KindArg, ValidateArgs};

fn counts(kind: KindArg, n: usize) -> CliResult<KindCounts> {
    let k = match kind {
        KindArg::All => return Ok(KindCounts::uniform(n)),
        KindArg::A => ScenarioKind::TypeA,
        KindArg::B => ScenarioKind::TypeB,
        KindArg::Cutout => ScenarioKind::Cutout,
    };
    Ok(KindCounts::only(k, n)?)
}

pub fn generate(a: &GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.generate.easy |= a.easy;
    let spec = DatasetSpec {
        train: counts(a.kind, a.count)?,
        test: counts(a.kind, a.test_count)?,
        params: cfg.generate,
    };
    let seed = a.seed.unwrap_or(cfg.generate.seed);
    build_dataset(&spec, seed, &a.out)?;
    writeln!(out, "{}", a.out.join("manifest.json").display())?;
    Ok(())
}

pub fn validate(a: &ValidateArgs, out: &mut dyn Write) -> CliResult<()> {
    let paths = expand_paths(&a.paths);
    let mut failed = 0;
    for p in &paths {
        match load_scenario(p) {
            Ok(s) => {
                let r = check_drivability(&s);
                if r.feasible {
                    writeln!(out, "{}: feasible", p.display())?;
                } else {
                    failed += 1;
                    writeln!(
                        out,
                        "{}: infeasible: {} violation(s), first {:?}",
                        p.display(),
                        r.violations.len(),
                        r.violations[0]
                    )?;
                }
            }
            Err(e) => {
                failed += 1;
                writeln!(out, "{}: error: {e}", p.display())?;
            }
        }
    }
    if failed > 0 {
        return Err(CliError::data(format!(
            "{failed} of {} scenario(s) failed validation",
            paths.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEntry {
    pub path: PathBuf,
    pub id: String,
    /// `None` when the maintain policy never collides.
    pub decision_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterList {
    pub scenarios: Vec<FilterEntry>,
}

pub fn filter(a: &FilterArgs, out: &mut dyn Write) -> CliResult<()> {
    let paths = expand_paths(&a.paths);
    let mut kept = FilterList::default();
    let mut rejected = FilterList::default();
    let mut errors = 0;
    for p in &paths {
        let verdict = load_scenario(p).and_then(|s| Ok((decision_time(&s)?, s.id)));
        match verdict {
            Ok((dt, id)) => {
                let keep = passes_filter(dt);
                let shown = if dt.is_finite() {
                    format!("decision time {dt:.2} s")
                } else {
                    "maintain never collides".to_string()
                };
                writeln!(
                    out,
                    "{}: {} ({shown})",
                    p.display(),
                    if keep { "kept" } else { "rejected" }
                )?;
                let entry = FilterEntry {
                    path: p.clone(),
                    id,
                    decision_time: dt.is_finite().then_some(dt),
                };
                if keep { &mut kept } else { &mut rejected }
                    .scenarios
                    .push(entry);
            }
            Err(e) => {
                errors += 1;
                writeln!(out, "{}: error: {e}", p.display())?;
            }
        }
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        for (name, list) in [("kept.json", &kept), ("rejected.json", &rejected)] {
            let mut bytes =
                serde_json::to_vec_pretty(list).map_err(|e| CliError::Runtime(e.into()))?;
            bytes.push(b'\n');
            std::fs::write(dir.join(name), bytes)?;
        }
    }
    if errors > 0 {
        return Err(CliError::data(format!(
            "{errors} of {} scenario(s) could not be read",
            paths.len()
        )));
    }
    Ok(())
}
