//! On-disk null-distribution cache.
//!
//! One JSON file per key, named by the key digest and carrying a SHA-256 checksum over
//! the key and the exact value bits. Entries that fail to parse, belong to another key
//! or fail the checksum are ignored (and overwritten on the next store). Readers and
//! writers coordinate through an advisory lock on a sibling `.lock` file.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hypothesis::{NullDistribution, NullKey, NullStore};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    key: NullKey,
    values: Vec<f64>,
    checksum: String,
}

fn checksum(key: &NullKey, values: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(key.digest().as_bytes());
    h.update((values.len() as u64).to_le_bytes());
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn encode_cache_entry(null: &NullDistribution) -> Result<String> {
    let key = null.key();
    let entry = CacheEntry {
        checksum: checksum(&key, &null.values),
        key,
        values: null.values.clone(),
    };
    super::to_json(&entry)
}

/// Decodes and verifies an entry. `expected` additionally pins the key.
pub fn decode_cache_entry(bytes: &[u8], expected: Option<&NullKey>) -> Result<NullDistribution> {
    let entry: CacheEntry = serde_json::from_slice(bytes)?;
    if let Some(k) = expected {
        if &entry.key != k {
            return Err(Error::Malformed(
                "cache entry belongs to a different key".into(),
            ));
        }
    }
    if checksum(&entry.key, &entry.values) != entry.checksum {
        return Err(Error::Malformed("cache entry checksum mismatch".into()));
    }
    let null = NullDistribution {
        n: entry.key.n,
        m: entry.key.m,
        grid_fingerprint: entry.key.grid_fingerprint,
        seed: entry.key.seed,
        values: entry.values,
    };
    if null.len() != entry.key.permutations {
        return Err(Error::Malformed(
            "cache entry has the wrong number of values".into(),
        ));
    }
    null.validate()?;
    Ok(null)
}

#[derive(Debug, Clone)]
pub struct DiskNullCache {
    dir: PathBuf,
}

impl DiskNullCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(DiskNullCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &NullKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest()))
    }

    fn lock_file(&self, key: &NullKey) -> Result<File> {
        let path = self.dir.join(format!("{}.lock", key.digest()));
        OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))
    }
}

impl NullStore for DiskNullCache {
    fn load(&self, key: &NullKey) -> Option<NullDistribution> {
        let lock = self.lock_file(key).ok()?;
        lock.lock_shared().ok()?;
        let bytes = std::fs::read(self.entry_path(key)).ok();
        let _ = lock.unlock();
        decode_cache_entry(&bytes?, Some(key)).ok()
    }

    fn store(&self, null: &NullDistribution) -> Result<()> {
        let key = null.key();
        let text = encode_cache_entry(null)?;
        let lock = self.lock_file(&key)?;
        let path = self.entry_path(&key);
        lock.lock().map_err(|e| Error::io(&path, e))?;
        let tmp = self
            .dir
            .join(format!("{}.tmp{}", key.digest(), std::process::id()));
        let result = std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| Error::io(&path, e));
        let _ = lock.unlock();
        result
    }
}
