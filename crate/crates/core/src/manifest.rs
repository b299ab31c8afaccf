//! Run manifests: enough provenance to re-run a command bit-identically.
//!
//! The reproducibility hash covers only the deterministic fields (command,
//! config, seeds, input hashes), never wall time, so identical runs produce
//! identical hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_s: f64,
    /// SHA-256 over the deterministic fields above (wall time excluded).
    pub repro_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Collects provenance while a command runs and writes the manifest
/// atomically at the end.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    /// Records an input file with its content hash; missing files record an
    /// empty hash rather than failing the run.
    pub fn input(&mut self, path: &Path) -> &mut Self {
        let sha256 = file_sha256(path).unwrap_or_default();
        self.inputs.push(InputRecord { path: path.display().to_string(), sha256 });
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn finish(self) -> RunManifest {
        let hashed = serde_json::json!({
            "command": self.command,
            "config": self.config,
            "seeds": self.seeds,
            "inputs": self.inputs,
        });
        let repro_hash = sha256_hex(hashed.to_string().as_bytes());
        RunManifest {
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            repro_hash,
        }
    }
}

impl RunManifest {
    /// Writes via a temp file and rename so the manifest appears atomically.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        std::fs::rename(&tmp, path)
    }

    pub fn load(path: &Path) -> std::io::Result<RunManifest> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(std::io::Error::other)
    }
}

/// Manifest filename placed in every output directory.
pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repro_hash_ignores_wall_time() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, b"payload").unwrap();

        let build = || {
            let mut b = ManifestBuilder::new("test", serde_json::json!({"a": 1}));
            b.seed("main", 42).input(&input);
            b.finish()
        };
        let m1 = build();
        std::thread::sleep(std::time::Duration::from_millis(5));
        let m2 = build();
        assert_eq!(m1.repro_hash, m2.repro_hash);
        assert_eq!(m1.inputs[0].sha256.len(), 64);
    }

    #[test]
    fn hash_tracks_inputs_and_seeds() {
        let mut a = ManifestBuilder::new("cmd", serde_json::json!({}));
        a.seed("s", 1);
        let mut b = ManifestBuilder::new("cmd", serde_json::json!({}));
        b.seed("s", 2);
        assert_ne!(a.finish().repro_hash, b.finish().repro_hash);
    }

    #[test]
    fn save_and_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = manifest_path(dir.path());
        let m = ManifestBuilder::new("x", serde_json::json!({"k": true})).finish();
        m.save(&path).unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
