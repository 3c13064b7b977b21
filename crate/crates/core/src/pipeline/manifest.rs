use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Completion record of one stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over the stage's config section and its input hashes.
    pub fingerprint: String,
    /// Input name to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Artifact path, relative to the output directory, to content hash.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self { tool_version: TOOL_VERSION.to_string(), stages: BTreeMap::new() }
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(sha256_bytes(&fs::read(path)?))
}

/// Write via a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

impl RunManifest {
    /// Load from the output directory; a missing or unreadable manifest is empty.
    pub fn load(output_dir: &Path) -> Self {
        let path = output_dir.join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice::<RunManifest>(&bytes) {
                Ok(m) if m.tool_version == TOOL_VERSION => m,
                Ok(_) => {
                    log::info!("manifest written by another version; starting fresh");
                    Self::default()
                }
                Err(e) => {
                    log::warn!("ignoring unreadable manifest {}: {e}", path.display());
                    Self::default()
                }
            },
            Err(_) => Self::default(),
        }
    }

    pub fn save(&self, output_dir: &Path) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(io::Error::other)?;
        bytes.push(b'\n');
        write_atomic(&output_dir.join(MANIFEST_FILE), &bytes)
    }

    /// True when `stage` completed with this fingerprint and every artifact
    /// is still on disk unchanged.
    pub fn is_current(&self, stage: &str, fingerprint: &str, output_dir: &Path) -> bool {
        let Some(rec) = self.stages.get(stage) else { return false };
        rec.fingerprint == fingerprint
            && rec
                .outputs
                .iter()
                .all(|(rel, hash)| sha256_file(&output_dir.join(rel)).is_ok_and(|h| &h == hash))
    }

    pub fn record(&mut self, stage: &str, rec: StageRecord) {
        self.stages.insert(stage.to_string(), rec);
    }
}

/// Fingerprint from a config section and named input hashes.
pub fn fingerprint(stage: &str, config: &serde_json::Value, inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(TOOL_VERSION.as_bytes());
    h.update([0]);
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config).expect("json value serializes"));
    for (k, v) in inputs {
        h.update([0]);
        h.update(k.as_bytes());
        h.update([b'=']);
        h.update(v.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Hash the listed artifacts, keyed by their path relative to `output_dir`.
pub fn hash_outputs(output_dir: &Path, files: &[PathBuf]) -> io::Result<BTreeMap<String, String>> {
    files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(output_dir).unwrap_or(f);
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok((key, sha256_file(f)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(d.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn currency_tracks_fingerprint_and_outputs() {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().join("x.csv");
        write_atomic(&out, b"1,2\n").unwrap();
        let mut m = RunManifest::default();
        let inputs = BTreeMap::from([("corpus".to_string(), sha256_bytes(b"c"))]);
        let fp = fingerprint("chunk", &serde_json::json!({"budget": 2000}), &inputs);
        m.record("chunk", StageRecord { fingerprint: fp.clone(), inputs, outputs: hash_outputs(d.path(), &[out.clone()]).unwrap() });
        m.save(d.path()).unwrap();
        let loaded = RunManifest::load(d.path());
        assert_eq!(loaded, m);
        assert!(loaded.is_current("chunk", &fp, d.path()));
        assert!(!loaded.is_current("chunk", "other", d.path()));
        write_atomic(&out, b"tampered\n").unwrap();
        assert!(!loaded.is_current("chunk", &fp, d.path()));
        assert_eq!(m.stages["chunk"].outputs.keys().next().unwrap(), "x.csv");
    }
}
