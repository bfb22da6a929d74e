use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{decision_time, generate_kind, passes_filter, GenParams};
use crate::error::{Error, Result};
use crate::scenario::{load_json_file, save_json, Scenario, ScenarioKind};

pub const MANIFEST_VERSION: u32 = 1;

/// Redraws allowed per dataset slot when the decision-time filter rejects.
const FILTER_ATTEMPTS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct KindCounts {
    pub type_a: usize,
    pub type_b: usize,
    pub cutout: usize,
}

impl KindCounts {
    pub fn uniform(n: usize) -> Self {
        Self {
            type_a: n,
            type_b: n,
            cutout: n,
        }
    }

    pub fn only(kind: ScenarioKind, n: usize) -> Result<Self> {
        let mut c = Self::default();
        match kind {
            ScenarioKind::TypeA => c.type_a = n,
            ScenarioKind::TypeB => c.type_b = n,
            ScenarioKind::Cutout => c.cutout = n,
            other => return Err(Error::param("kind", format!("no generator for {other}"))),
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.type_a + self.type_b + self.cutout
    }

    fn entries(&self) -> [(ScenarioKind, usize); 3] {
        [
            (ScenarioKind::TypeA, self.type_a),
            (ScenarioKind::TypeB, self.type_b),
            (ScenarioKind::Cutout, self.cutout),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub train: KindCounts,
    pub test: KindCounts,
    /// Template for every draw; its `seed` is replaced per scenario.
    pub params: GenParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub id: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub easy: bool,
    /// `None` when the maintain policy never collides.
    pub decision_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn empty(seed: u64) -> Self {
        Self {
            schema_version: MANIFEST_VERSION,
            seed,
            train: Vec::new(),
            test: Vec::new(),
        }
    }

    pub fn entries(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        let m: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::schema("manifest", e.to_string()))?;
        if m.schema_version != MANIFEST_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported manifest version {}", m.schema_version),
            ));
        }
        Ok(m)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one dataset slot. Train and test draw from disjoint streams.
pub(crate) fn derive_seed(
    master: u64,
    split: Split,
    kind: ScenarioKind,
    index: usize,
    attempt: u64,
) -> u64 {
    let mut h = splitmix(master);
    for tag in [split as u64 + 1, kind as u64 + 11, index as u64, attempt] {
        h = splitmix(h ^ tag);
    }
    h
}

fn kind_slug(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::TypeA => "type_a",
        ScenarioKind::TypeB => "type_b",
        ScenarioKind::Cutout => "cutout",
        ScenarioKind::RealRoad => "real_road",
        ScenarioKind::Other => "other",
    }
}

fn generate_slot(
    template: &GenParams,
    master: u64,
    split: Split,
    kind: ScenarioKind,
    index: usize,
) -> Result<(Scenario, ManifestEntry)> {
    let slug = kind_slug(kind);
    for attempt in 0..FILTER_ATTEMPTS {
        let seed = derive_seed(master, split, kind, index, attempt);
        let params = GenParams { seed, ..*template };
        let mut s = generate_kind(kind, &params).map_err(|e| match e {
            Error::GenerationExhausted { attempts, .. } => Error::GenerationExhausted {
                kind: format!("{} {slug} #{index}", split.as_str()),
                attempts,
            },
            other => other,
        })?;
        let dt = decision_time(&s)?;
        if !passes_filter(dt) {
            continue;
        }
        s.id = format!("{}-{slug}-{index:04}", split.as_str());
        let entry = ManifestEntry {
            path: format!("{}/{slug}_{index:04}.json", split.as_str()),
            id: s.id.clone(),
            kind,
            seed,
            easy: s.meta.easy,
            decision_time: dt.is_finite().then_some(dt),
        };
        return Ok((s, entry));
    }
    Err(Error::GenerationExhausted {
        kind: format!("{} {slug} #{index} (decision-time filter)", split.as_str()),
        attempts: FILTER_ATTEMPTS as usize,
    })
}

/// Generate, filter and write a dataset under `out_dir`, returning the
/// manifest (also written as `manifest.json`). Output depends only on
/// `(spec, seed)`.
pub fn build_dataset(spec: &DatasetSpec, seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    spec.params.validate()?;
    let out_dir = out_dir.as_ref();
    let mut jobs = Vec::new();
    for (split, counts) in [(Split::Train, spec.train), (Split::Test, spec.test)] {
        for (kind, n) in counts.entries() {
            jobs.extend((0..n).map(|i| (split, kind, i)));
        }
    }
    let made: Vec<(Split, Scenario, ManifestEntry)> = jobs
        .par_iter()
        .map(|&(split, kind, i)| {
            generate_slot(&spec.params, seed, split, kind, i).map(|(s, e)| (split, s, e))
        })
        .collect::<Result<_>>()?;

    std::fs::create_dir_all(out_dir)?;
    let mut manifest = Manifest::empty(seed);
    for (split, s, entry) in made {
        let path = out_dir.join(&entry.path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, save_json(&s)?)?;
        match split {
            Split::Train => manifest.train.push(entry),
            Split::Test => manifest.test.push(entry),
        }
    }
    std::fs::write(out_dir.join("manifest.json"), manifest.to_bytes()?)?;
    Ok(manifest)
}

fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&entry.path)
}

/// Load every scenario of one split of a manifest file.
pub fn load_manifest_scenarios(
    manifest_path: impl AsRef<Path>,
    split: Split,
) -> Result<Vec<Arc<Scenario>>> {
    let path = manifest_path.as_ref();
    let m = Manifest::load(path)?;
    m.entries(split)
        .iter()
        .map(|e| load_json_file(resolve(path, e)).map(Arc::new))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_split_kind_index() {
        let a = derive_seed(7, Split::Train, ScenarioKind::TypeA, 0, 0);
        assert_ne!(a, derive_seed(7, Split::Test, ScenarioKind::TypeA, 0, 0));
        assert_ne!(a, derive_seed(7, Split::Train, ScenarioKind::TypeB, 0, 0));
        assert_ne!(a, derive_seed(7, Split::Train, ScenarioKind::TypeA, 1, 0));
        assert_ne!(a, derive_seed(7, Split::Train, ScenarioKind::TypeA, 0, 1));
        assert_eq!(a, derive_seed(7, Split::Train, ScenarioKind::TypeA, 0, 0));
    }

    #[test]
    fn empty_counts_give_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            train: KindCounts::default(),
            test: KindCounts::default(),
            params: GenParams::default(),
        };
        let m = build_dataset(&spec, 3, dir.path()).unwrap();
        assert!(m.train.is_empty() && m.test.is_empty());
        assert_eq!(Manifest::load(dir.path().join("manifest.json")).unwrap(), m);
    }
}
