//! Append-only JSON-lines key/value cache shared by the chat and embedding clients.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct Record<V> {
    key: String,
    response: V,
    timestamp: u64,
}

struct Inner<V> {
    entries: HashMap<String, V>,
    file: Option<File>,
}

/// Thread-safe response cache, optionally persisted to a JSON-lines file of
/// `{key, response, timestamp}` records. A later record for the same key
/// replaces an earlier one on load.
pub struct ResponseCache<V> {
    inner: Arc<Mutex<Inner<V>>>,
    path: Option<PathBuf>,
}

impl<V> Clone for ResponseCache<V> {
    fn clone(&self) -> Self {
        Self { inner: Arc::clone(&self.inner), path: self.path.clone() }
    }
}

impl<V: Clone + Serialize + DeserializeOwned> ResponseCache<V> {
    pub fn in_memory() -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner { entries: HashMap::new(), file: None })),
            path: None,
        }
    }

    /// Opens (creating if needed) a persisted cache. Unreadable lines, such as
    /// a record truncated by an interrupted run, are skipped.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                match serde_json::from_str::<Record<V>>(&line) {
                    Ok(rec) => {
                        entries.insert(rec.key, rec.response);
                    }
                    Err(e) if !line.trim().is_empty() => {
                        log::warn!("{}: skipping unreadable cache line: {e}", path.display());
                    }
                    Err(_) => {}
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let existing = std::fs::read(path)?;
        if existing.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n")?;
        }
        Ok(Self {
            inner: Arc::new(Mutex::new(Inner { entries, file: Some(file) })),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.inner.lock().expect("cache lock").entries.get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, value: V) -> io::Result<()> {
        let mut inner = self.inner.lock().expect("cache lock");
        if let Some(file) = inner.file.as_mut() {
            let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            let rec = Record { key: key.to_string(), response: &value, timestamp };
            let mut line = serde_json::to_string(&rec).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.entries.insert(key.to_string(), value);
        Ok(())
    }
}
