use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

/// Hex SHA-256 of `model_id`, a NUL separator, then the prompt bytes.
pub fn cache_key(model_id: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

/// Write-through completion cache.
///
/// The persistent side is a directory holding one UTF-8 file per key, named
/// by the key's hex digest. Files are written to a temporary name and
/// renamed, so concurrent writers never expose a partial value and the
/// directory contents do not depend on completion order.
#[derive(Debug)]
pub struct CompletionCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, String>>,
}

impl CompletionCache {
    /// Cache with no persistent store.
    pub fn in_memory() -> Self {
        Self { dir: None, memory: RwLock::new(HashMap::new()) }
    }

    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir: Some(dir), memory: RwLock::new(HashMap::new()) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, key: &str) -> io::Result<Option<String>> {
        if let Some(v) = self.memory.read().unwrap().get(key) {
            return Ok(Some(v.clone()));
        }
        let Some(dir) = &self.dir else { return Ok(None) };
        match fs::read_to_string(dir.join(key)) {
            Ok(v) => {
                self.memory.write().unwrap().insert(key.to_string(), v.clone());
                Ok(Some(v))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, value: &str) -> io::Result<()> {
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!(".{key}.{}.tmp", std::process::id()));
            {
                let mut f = fs::File::create(&tmp)?;
                f.write_all(value.as_bytes())?;
                f.sync_all()?;
            }
            fs::rename(&tmp, dir.join(key))?;
        }
        self.memory.write().unwrap().insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Forget everything held in memory; the persistent store is untouched.
    pub fn clear_memory(&self) {
        self.memory.write().unwrap().clear();
    }

    pub fn len_in_memory(&self) -> usize {
        self.memory.read().unwrap().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_model_and_prompt() {
        let a = cache_key("m1", "p");
        assert_eq!(a.len(), 64);
        assert_eq!(a, cache_key("m1", "p"));
        assert_ne!(a, cache_key("m2", "p"));
        assert_ne!(a, cache_key("m1", "q"));
        // the separator keeps (model, prompt) splits distinct
        assert_ne!(cache_key("ab", "c"), cache_key("a", "bc"));
    }

    #[test]
    fn persists_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let c = CompletionCache::open(dir.path()).unwrap();
        let k = cache_key("m", "prompt");
        assert_eq!(c.get(&k).unwrap(), None);
        c.put(&k, "value ünïcode").unwrap();
        c.clear_memory();
        assert_eq!(c.len_in_memory(), 0);
        assert_eq!(c.get(&k).unwrap().as_deref(), Some("value ünïcode"));

        let reopened = CompletionCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&k).unwrap().as_deref(), Some("value ünïcode"));
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from(&k)]);
    }
}
