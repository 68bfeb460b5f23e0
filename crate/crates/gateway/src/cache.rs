//! One JSON file per request digest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::request::{canonical_key, ChatRequest, ChatResponse};
use crate::GatewayError;

const TMP_PREFIX: &str = ".tmp-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GcReport {
    pub kept: usize,
    pub removed_temp: usize,
    pub removed_corrupt: usize,
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    seq: AtomicU64,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| cache_err(&dir, e))?;
        Ok(Self { dir, seq: AtomicU64::new(0) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, GatewayError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| cache_err(&path, e))?;
        if entry.key != key {
            return Err(cache_err(&path, format!("entry records key {}", entry.key)));
        }
        Ok(Some(entry))
    }

    /// Writes through a temp file and rename so readers never observe a
    /// partial entry.
    pub fn put(&self, request: &ChatRequest, response: &ChatResponse) -> Result<String, GatewayError> {
        let key = canonical_key(request);
        let entry = CacheEntry {
            key: key.clone(),
            request: request.clone(),
            response: response.clone(),
        };
        let mut body = serde_json::to_vec_pretty(&entry).map_err(|e| cache_err(&self.dir, e))?;
        body.push(b'\n');
        let n = self.seq.fetch_add(1, Ordering::Relaxed);
        let tmp = self.dir.join(format!("{TMP_PREFIX}{key}-{}-{n}", std::process::id()));
        let target = self.path_for(&key);
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
            fs::rename(&tmp, &target)
        };
        if let Err(e) = write() {
            let _ = fs::remove_file(&tmp);
            return Err(cache_err(&target, e));
        }
        Ok(key)
    }

    /// All readable entries, sorted by key.
    pub fn entries(&self) -> Result<Vec<CacheEntry>, GatewayError> {
        let mut out = Vec::new();
        for key in self.keys()? {
            if let Ok(Some(e)) = self.get(&key) {
                out.push(e);
            }
        }
        Ok(out)
    }

    fn keys(&self) -> Result<Vec<String>, GatewayError> {
        let mut keys: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| cache_err(&self.dir, e))?
            .filter_map(|d| d.ok())
            .filter_map(|d| d.file_name().to_str().and_then(|n| n.strip_suffix(".json")).map(str::to_string))
            .filter(|k| !k.starts_with(TMP_PREFIX))
            .collect();
        keys.sort();
        Ok(keys)
    }

    /// Removes leftover temp files and entries that fail to parse or whose
    /// stored request no longer hashes to the file name.
    pub fn gc(&self) -> Result<GcReport, GatewayError> {
        let mut report = GcReport::default();
        for d in fs::read_dir(&self.dir).map_err(|e| cache_err(&self.dir, e))? {
            let d = d.map_err(|e| cache_err(&self.dir, e))?;
            let name = d.file_name().to_string_lossy().into_owned();
            if name.starts_with(TMP_PREFIX) {
                fs::remove_file(d.path()).map_err(|e| cache_err(&d.path(), e))?;
                report.removed_temp += 1;
                continue;
            }
            let Some(key) = name.strip_suffix(".json") else { continue };
            let valid = matches!(self.get(key), Ok(Some(e)) if canonical_key(&e.request) == key);
            if valid {
                report.kept += 1;
            } else {
                fs::remove_file(d.path()).map_err(|e| cache_err(&d.path(), e))?;
                report.removed_corrupt += 1;
            }
        }
        Ok(report)
    }
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Cache {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
