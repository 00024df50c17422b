use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One line of the JSONL cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_hash: String,
    pub prompt: String,
    pub response_text: String,
    pub timestamp: String,
    pub attempt_count: usize,
}

pub fn request_hash(model_name: &str, prompt: &str, temperature: f64) -> String {
    let mut h = Sha256::new();
    for part in [model_name.as_bytes(), prompt.as_bytes(), &temperature.to_le_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

struct Inner {
    file: File,
    entries: HashMap<String, Vec<CacheEntry>>,
}

/// Append-only response cache. A hit requires both the hash and the full
/// prompt text to match.
pub struct ResponseCache {
    inner: Mutex<Inner>,
}

impl ResponseCache {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut entries: HashMap<String, Vec<CacheEntry>> = HashMap::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => entries.entry(e.request_hash.clone()).or_default().push(e),
                    Err(err) => log::warn!("{}:{}: skipping bad cache line: {err}", path.display(), n + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: Mutex::new(Inner { file, entries }),
        })
    }

    pub fn get(&self, hash: &str, prompt: &str) -> Option<String> {
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner
            .entries
            .get(hash)?
            .iter()
            .find(|e| e.prompt == prompt)
            .map(|e| e.response_text.clone())
    }

    pub fn put(&self, hash: &str, prompt: &str, response: &str, attempt_count: usize) -> std::io::Result<()> {
        let entry = CacheEntry {
            request_hash: hash.to_owned(),
            prompt: prompt.to_owned(),
            response_text: response.to_owned(),
            timestamp: chrono::DateTime::<chrono::Utc>::from(std::time::SystemTime::now()).to_rfc3339(),
            attempt_count,
        };
        let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner.file.write_all(line.as_bytes())?;
        inner.file.flush()?;
        inner.entries.entry(entry.request_hash.clone()).or_default().push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
