//! Per-run manifest. Contains no timestamps or host details, so reruns with
//! the same inputs write identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::CHECKPOINT_VERSION;
use super::corpus_dir::CORPUS_FORMAT_VERSION;
use super::embeddings::EMBEDDING_VERSION;
use crate::error::Result;
use crate::seed::content_hash;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub formats: BTreeMap<String, u32>,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Input file → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

/// SHA-256 of the canonical JSON encoding of a config.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(content_hash(&serde_json::to_vec(config)?))
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, config: &T) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            formats: BTreeMap::from([
                ("REMB".to_string(), EMBEDDING_VERSION),
                ("RFKT".to_string(), CHECKPOINT_VERSION),
                ("corpus".to_string(), CORPUS_FORMAT_VERSION),
            ]),
            config_hash: config_hash(config)?,
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn seed(mut self, purpose: &str, seed: u64) -> Self {
        self.seeds.insert(purpose.to_string(), seed);
        self
    }

    /// Record an input file by content hash; directories hash every file in
    /// name order.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let hash = if path.is_dir() {
            let mut names: Vec<_> = fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            names.sort();
            let mut all = Vec::new();
            for p in names.iter().filter(|p| p.is_file()) {
                all.extend(p.file_name().unwrap_or_default().as_encoded_bytes());
                all.extend(content_hash(&fs::read(p)?).as_bytes());
            }
            content_hash(&all)
        } else {
            content_hash(&fs::read(path)?)
        };
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config_content() {
        let a = config_hash(&serde_json::json!({"seed": 1})).unwrap();
        let b = config_hash(&serde_json::json!({"seed": 2})).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&serde_json::json!({"seed": 1})).unwrap());
    }

    #[test]
    fn same_inputs_give_identical_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.txt");
        fs::write(&f, "abc").unwrap();
        let build = || {
            let mut m = Manifest::new("test", &serde_json::json!({"k": 1})).unwrap().seed("master", 3);
            m.input(&f).unwrap();
            m.input(dir.path()).unwrap();
            serde_json::to_string(&m).unwrap()
        };
        assert_eq!(build(), build());
    }
}
