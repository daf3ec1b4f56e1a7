//! Experiment manifests: one JSON document per dataset directory recording
//! the experiment constants, the generation seed and a checksummed file
//! listing. Loaders verify every checksum.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::GridSpec;
use crate::physics::DomainSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Burger,
    FluidNatural,
    FluidShapes,
    FluidIndirect,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "burger" => Ok(Self::Burger),
            "fluid_natural" => Ok(Self::FluidNatural),
            "fluid_shapes" => Ok(Self::FluidShapes),
            "fluid_indirect" => Ok(Self::FluidIndirect),
            other => Err(Error::Config(format!("unknown experiment kind {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Burger => "burger",
            Self::FluidNatural => "fluid_natural",
            Self::FluidShapes => "fluid_shapes",
            Self::FluidIndirect => "fluid_indirect",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: ExperimentKind,
    pub grid_dims: Vec<usize>,
    pub dt: f64,
    pub steps: usize,
    pub nu: f64,
    pub buoyancy: Vec<f64>,
    pub cg_tolerance: f64,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
    /// Independent transitions per example (multi-shape datasets).
    #[serde(default = "one")]
    pub shapes_per_example: usize,
    /// Fixed domain description for experiments with obstacles.
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    /// Per-example metadata (e.g. target bucket indices), keyed by example.
    #[serde(default)]
    pub example_meta: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub files: Vec<FileEntry>,
}

fn one() -> usize {
    1
}

impl ExperimentManifest {
    pub fn desk_default(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Burger => Self {
                experiment: kind,
                grid_dims: vec![32],
                dt: 1.0,
                steps: 32,
                nu: 0.01,
                buoyancy: vec![],
                cg_tolerance: 1e-6,
                seed: 1,
                train_count: 200,
                test_count: 20,
                shapes_per_example: 1,
                domain: None,
                example_meta: BTreeMap::new(),
                files: Vec::new(),
            },
            ExperimentKind::FluidNatural => Self {
                experiment: kind,
                grid_dims: vec![32, 32],
                dt: 1.0,
                steps: 16,
                nu: 0.0,
                buoyancy: vec![0.0, -0.08],
                cg_tolerance: 1e-6,
                seed: 1,
                train_count: 40,
                test_count: 8,
                shapes_per_example: 1,
                domain: None,
                example_meta: BTreeMap::new(),
                files: Vec::new(),
            },
            ExperimentKind::FluidShapes => Self {
                experiment: kind,
                grid_dims: vec![32, 32],
                dt: 1.0,
                steps: 16,
                nu: 0.0,
                buoyancy: vec![0.0, 0.0],
                cg_tolerance: 1e-6,
                seed: 1,
                train_count: 60,
                test_count: 10,
                shapes_per_example: 1,
                domain: None,
                example_meta: BTreeMap::new(),
                files: Vec::new(),
            },
            ExperimentKind::FluidIndirect => Self {
                experiment: kind,
                grid_dims: vec![32, 32],
                dt: 1.0,
                steps: 16,
                nu: 0.0,
                buoyancy: vec![0.0, 0.0],
                cg_tolerance: 1e-6,
                seed: 1,
                train_count: 360,
                test_count: 20,
                shapes_per_example: 1,
                domain: None,
                example_meta: BTreeMap::new(),
                files: Vec::new(),
            },
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::unit(&self.grid_dims)
    }

    pub fn example_count(&self) -> usize {
        self.train_count + self.test_count
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("manifest.json");
        let text = std::fs::read_to_string(&path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Load and verify that every listed file exists with the recorded
    /// checksum.
    pub fn load_verified(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = Self::load(dir)?;
        for entry in &m.files {
            let path = dir.join(&entry.path);
            if !path.exists() {
                return Err(Error::Format(format!(
                    "missing dataset file {}",
                    path.display()
                )));
            }
            let actual = super::pdtf::file_sha256(&path)?;
            if actual != entry.sha256 {
                return Err(Error::ChecksumMismatch {
                    path: entry.path.clone(),
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
        }
        Ok(m)
    }

    pub fn example_dir(&self, dir: impl AsRef<Path>, k: usize) -> PathBuf {
        dir.as_ref().join(format!("ex{k}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_verifies() {
        let dir = std::env::temp_dir().join("pdectl_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let payload = dir.join("blob.pdtf");
        super::super::pdtf::save_tensor(&payload, &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut m = ExperimentManifest::desk_default(ExperimentKind::Burger);
        m.files.push(FileEntry {
            path: "blob.pdtf".into(),
            sha256: super::super::pdtf::file_sha256(&payload).unwrap(),
        });
        m.save(&dir).unwrap();
        let loaded = ExperimentManifest::load_verified(&dir).unwrap();
        assert_eq!(loaded.grid_dims, vec![32]);

        // Tampering breaks verification.
        std::fs::write(&payload, b"junk").unwrap();
        assert!(matches!(
            ExperimentManifest::load_verified(&dir),
            Err(Error::ChecksumMismatch { .. })
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
