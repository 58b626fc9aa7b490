//! Memory and on-disk cache for H matrices and code words.
//!
//! Entries are JSON files named by the SHA-256 of their key. Files are
//! written to a temporary name and renamed into place, so concurrent
//! writers never expose a partial file.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use crate::codes::CodeWords;
use crate::error::Result;
use crate::fock::TruncatedSpace;
use crate::measure::{h_matrix, HMatrix, Scheme};

pub const CACHE_ENV: &str = "BQEC_CACHE_DIR";

#[derive(Serialize, Deserialize)]
struct HDocument {
    scheme: Scheme,
    dim: usize,
    /// Column-major entries.
    entries: Vec<f64>,
}

#[derive(Default)]
pub struct Cache {
    dir: Option<PathBuf>,
    h: Mutex<HashMap<(Scheme, usize), Arc<HMatrix>>>,
    words: Mutex<HashMap<String, Arc<CodeWords>>>,
}

impl Cache {
    /// Memory only.
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    /// `$BQEC_CACHE_DIR`, or `bqec-cache` in the system temp directory.
    pub fn from_env() -> Self {
        let dir = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("bqec-cache"));
        Self::at(dir)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, prefix: &str, key: &str) -> Option<PathBuf> {
        let digest = hex(&Sha256::digest(key.as_bytes()));
        self.dir.as_ref().map(|d| d.join(format!("{prefix}-{}.json", &digest[..32])))
    }

    fn load<T: for<'de> Deserialize<'de>>(&self, prefix: &str, key: &str) -> Option<T> {
        let path = self.path(prefix, key)?;
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn store<T: Serialize>(&self, prefix: &str, key: &str, value: &T) {
        let Some(path) = self.path(prefix, key) else {
            return;
        };
        let write = || -> std::io::Result<()> {
            let dir = path.parent().expect("cache path has a parent");
            std::fs::create_dir_all(dir)?;
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(serde_json::to_string(value)?.as_bytes())?;
            tmp.persist(&path).map_err(|e| e.error)?;
            Ok(())
        };
        if let Err(e) = write() {
            log::warn!("cache write to {} failed: {e}", path.display());
        }
    }

    pub fn h_matrix(&self, scheme: Scheme, dim: usize) -> Result<Arc<HMatrix>> {
        if let Some(h) = self.h.lock().unwrap().get(&(scheme, dim)) {
            return Ok(h.clone());
        }
        let key = format!("h/{}/{dim}", scheme.name());
        let h = match self.load::<HDocument>("h", &key) {
            Some(doc) if doc.dim == dim && doc.scheme == scheme && doc.entries.len() == dim * dim => {
                HMatrix::from_entries(scheme, DMatrix::from_vec(dim, dim, doc.entries))?
            }
            _ => {
                let h = h_matrix(scheme, TruncatedSpace::new(dim)?)?;
                let doc = HDocument {
                    scheme,
                    dim,
                    entries: h.entries().as_slice().to_vec(),
                };
                self.store("h", &key, &doc);
                h
            }
        };
        let h = Arc::new(h);
        self.h.lock().unwrap().insert((scheme, dim), h.clone());
        Ok(h)
    }

    /// Code words under `key`, built with `build` on a miss.
    pub fn codewords(&self, key: &str, build: impl FnOnce() -> Result<CodeWords>) -> Result<Arc<CodeWords>> {
        if let Some(w) = self.words.lock().unwrap().get(key) {
            return Ok(w.clone());
        }
        let cached = self
            .load::<crate::codes::CodeWordsDocument>("words", key)
            .and_then(|doc| doc.into_codewords().ok());
        let words = match cached {
            Some(w) => w,
            None => {
                let w = build()?;
                self.store("words", key, &w.to_document());
                w
            }
        };
        let words = Arc::new(words);
        self.words.lock().unwrap().insert(key.to_string(), words.clone());
        Ok(words)
    }
}
