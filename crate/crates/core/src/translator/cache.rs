//! Persistent translation cache.
//!
//! The file is an append-only log of JSON lines. Opening it replays the log
//! (last writer wins), drops unreadable lines with a warning and rewrites the
//! file in compacted form.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    backend: String,
    src: String,
    tgt: String,
    input: String,
    output: String,
}

/// Hex SHA-256 of the unit-separator-joined key fields.
pub fn cache_key(backend_id: &str, src: &str, tgt: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in [backend_id, src, tgt, text].iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<String, CacheRecord>,
    log: Option<File>,
}

#[derive(Debug)]
pub struct TranslationCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        let mut entries = HashMap::new();
        match fs::read(path) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(content) => {
                    let mut bad = 0usize;
                    for line in content.lines().filter(|l| !l.trim().is_empty()) {
                        match serde_json::from_str::<CacheRecord>(line) {
                            Ok(r) if r.key == cache_key(&r.backend, &r.src, &r.tgt, &r.input) => {
                                entries.insert(r.key.clone(), r);
                            }
                            _ => bad += 1,
                        }
                    }
                    if bad > 0 {
                        log::warn!("{}: dropped {bad} corrupt cache line(s)", path.display());
                    }
                }
                Err(_) => log::warn!("{}: cache is not UTF-8, starting empty", path.display()),
            },
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }

        let mut records: Vec<&CacheRecord> = entries.values().collect();
        records.sort_by(|a, b| a.key.cmp(&b.key));
        let tmp = path.with_extension("compact.tmp");
        {
            let mut w = io::BufWriter::new(File::create(&tmp)?);
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        let log = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                entries,
                log: Some(log),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, backend_id: &str, src: &str, tgt: &str, text: &str) -> Option<String> {
        let key = cache_key(backend_id, src, tgt, text);
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner.entries.get(&key).map(|r| r.output.clone())
    }

    /// Records a translation. Storing an identical value again is a no-op;
    /// a different value replaces the old one.
    pub fn store(&self, backend_id: &str, src: &str, tgt: &str, text: &str, output: &str) -> io::Result<()> {
        let key = cache_key(backend_id, src, tgt, text);
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if inner.entries.get(&key).is_some_and(|r| r.output == output) {
            return Ok(());
        }
        let record = CacheRecord {
            key: key.clone(),
            backend: backend_id.to_string(),
            src: src.to_string(),
            tgt: tgt.to_string(),
            input: text.to_string(),
            output: output.to_string(),
        };
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            log.write_all(line.as_bytes())?;
            log.flush()?;
        }
        inner.entries.insert(key, record);
        Ok(())
    }
}
