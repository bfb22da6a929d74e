//! Native scenario JSON. The document is the flat `Scenario` object plus a
//! top-level `schema_version`.

use serde::Serialize;
use std::path::Path;

use super::Scenario;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct DocOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    scenario: &'a Scenario,
}

pub fn save_json(scenario: &Scenario) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&DocOut {
        schema_version: SCHEMA_VERSION,
        scenario,
    })?;
    out.push(b'\n');
    Ok(out)
}

/// Parse and validate a scenario document.
pub fn load_json(bytes: &[u8]) -> Result<Scenario> {
    let mut value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::schema(".", e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::schema(".", "document must be a JSON object"))?;
    match obj.remove("schema_version").map(|v| v.as_u64()) {
        Some(Some(v)) if v == SCHEMA_VERSION as u64 => {}
        Some(Some(v)) => {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version {v} (expected {SCHEMA_VERSION})"),
            ))
        }
        Some(None) => return Err(Error::schema("schema_version", "must be an integer")),
        None => return Err(Error::schema("schema_version", "missing field")),
    }
    let scenario: Scenario = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn save_json_file(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, save_json(scenario)?)?;
    Ok(())
}

pub fn load_json_file(path: impl AsRef<Path>) -> Result<Scenario> {
    load_json(&std::fs::read(path)?)
}
