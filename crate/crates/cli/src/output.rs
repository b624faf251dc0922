//! Output artifacts: every file carries the run seed and config hash, either
//! as `#`-prefixed header comments (CSV, text) or as fields of a metadata
//! sidecar.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Where artifacts land plus the provenance stamped into each one.
pub struct Outputs {
    pub dir: PathBuf,
    pub seed: u64,
    pub config_hash: String,
}

impl Outputs {
    pub fn new(dir: PathBuf, seed: u64, config_hash: String) -> Result<Self> {
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output dir {}", dir.display()))?;
        Ok(Self {
            dir,
            seed,
            config_hash,
        })
    }

    fn stamp(&self) -> String {
        format!("# seed={}\n# config_hash={}\n", self.seed, self.config_hash)
    }

    /// Write a CSV or text artifact with the provenance header.
    pub fn write_stamped(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let content = format!("{}{}", self.stamp(), body);
        std::fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    /// Write raw bytes without the header (formats that cannot take
    /// comments); pair with [`Outputs::write_metadata`].
    pub fn write_raw(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, body)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    /// Metadata sidecar for a directory of headerless artifacts.
    pub fn write_metadata(&self, dir: &Path) -> Result<PathBuf> {
        let meta = RunMetadata {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
        };
        let path = dir.join("metadata.toml");
        std::fs::write(&path, toml::to_string(&meta).expect("metadata serializes"))
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_hash: String,
}

/// Wrapper persisted by `train`: the model document plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub seed: u64,
    pub config_hash: String,
    pub model: pead_core::Model,
}
