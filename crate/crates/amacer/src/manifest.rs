//! Provenance record written beside every command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::write_json;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let sha256 = Sha256::digest(&data).iter().map(|b| format!("{b:02x}")).collect();
        Ok(InputDigest { path: path.to_path_buf(), sha256, bytes: data.len() as u64 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub amacer: String,
    pub store_format: u32,
    pub checkpoint_format: u32,
    pub stopwords: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            amacer: env!("CARGO_PKG_VERSION").into(),
            store_format: crate::store_format::VERSION,
            checkpoint_format: crate::checkpoint::VERSION,
            stopwords: amacer_core::posgen::STOPWORDS_VERSION.into(),
        }
    }
}

/// Everything except the two timestamps is a function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub rng_seed: u64,
    pub config: PipelineConfig,
    pub inputs: BTreeMap<String, InputDigest>,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub versions: Versions,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, config: &PipelineConfig) -> Self {
        RunManifest {
            command: command.into(),
            rng_seed: config.train.rng_seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            versions: Versions::default(),
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
        }
    }

    /// Digests `path` now, before any stage could rewrite it.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), InputDigest::of(path)?);
        Ok(())
    }

    pub fn artifact(&mut self, name: &str, path: &Path) {
        self.artifacts.insert(name.into(), path.to_path_buf());
    }

    pub fn path_in(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("{command}.manifest.json"))
    }

    /// Stamps the finish time and writes `<command>.manifest.json` into
    /// `out_dir`.
    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.finished_unix_ms = unix_ms();
        let path = Self::path_in(out_dir, &self.command);
        write_json(&path, &self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        let d = InputDigest::of(&p).unwrap();
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(d.bytes, 3);
    }

    #[test]
    fn manifest_is_written_beside_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::start("group", &PipelineConfig::default());
        m.artifact("clusters", &dir.path().join("clusters.jsonl"));
        let path = m.finish(dir.path()).unwrap();
        let back: RunManifest = crate::io::read_json(&path).unwrap();
        assert_eq!(back.command, "group");
        assert!(back.finished_unix_ms >= back.started_unix_ms);
        assert!(back.artifacts.contains_key("clusters"));
    }
}
