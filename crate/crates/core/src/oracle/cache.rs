//! Append-only persistent response cache.
//!
//! Each line of the cache file is `{"key": <hex sha256>, "response": <text>}`.
//! The key covers model name, temperature and both prompt texts. On load the
//! last line for a key wins, so a refreshed response supersedes older ones.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{Oracle, OracleStats, Prompt};
use crate::digest;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    response: String,
}

pub fn cache_key(model_name: &str, temperature: f64, prompt: &Prompt) -> String {
    digest::fields_hex(&[
        model_name.as_bytes(),
        &temperature.to_bits().to_le_bytes(),
        prompt.system.as_bytes(),
        prompt.user.as_bytes(),
    ])
}

pub struct CachedOracle<O> {
    inner: O,
    path: PathBuf,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<File>,
    hits: AtomicU64,
}

impl<O: Oracle> CachedOracle<O> {
    /// Opens (creating if needed) the cache file and loads existing entries.
    pub fn new(inner: O, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::Config(format!("cache directory {}: {e}", parent.display())))?;
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::Config(format!("cache path {} is not writable: {e}", path.display())))?;
        let mut entries = HashMap::new();
        let reader = File::open(&path).map_err(|e| Error::io(&path, e))?;
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Entry>(&line) {
                Ok(e) => {
                    entries.insert(e.key, e.response);
                }
                // A torn final line from an interrupted write is skipped.
                Err(err) => log::warn!("{}:{}: skipping unreadable cache line: {err}", path.display(), n + 1),
            }
        }
        Ok(CachedOracle {
            inner,
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
            hits: AtomicU64::new(0),
        })
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self, prompt: &Prompt) -> String {
        cache_key(self.inner.model_name(), self.inner.temperature(), prompt)
    }

    fn store(&self, key: String, response: &str) -> Result<()> {
        let line = serde_json::to_string(&Entry {
            key: key.clone(),
            response: response.to_string(),
        })?;
        {
            let mut w = self.writer.lock().expect("cache writer lock");
            w.write_all(line.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, response.to_string());
        Ok(())
    }
}

impl<O: Oracle> Oracle for CachedOracle<O> {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let key = self.key(prompt);
        if let Some(hit) = self.entries.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        let response = self.inner.complete(prompt)?;
        self.store(key, &response)?;
        Ok(response)
    }

    fn complete_fresh(&self, prompt: &Prompt) -> Result<String> {
        let response = self.inner.complete_fresh(prompt)?;
        self.store(self.key(prompt), &response)?;
        Ok(response)
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn temperature(&self) -> f64 {
        self.inner.temperature()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn is_replayable(&self) -> bool {
        true
    }

    fn max_retries(&self) -> u32 {
        self.inner.max_retries()
    }

    fn max_parallel(&self) -> usize {
        self.inner.max_parallel()
    }

    fn stats(&self) -> OracleStats {
        OracleStats {
            calls: self.inner.stats().calls,
            cache_hits: self.hits.load(Ordering::Relaxed),
        }
    }

    fn identity(&self) -> String {
        format!("{} [cache {}]", self.inner.identity(), self.path.display())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::testing::prompt;
    use crate::oracle::{SyntheticOracle, SyntheticOracleParams};

    /// Echo oracle counting its calls.
    struct Echo(AtomicU64);

    impl Oracle for Echo {
        fn complete(&self, p: &Prompt) -> Result<String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo {}", p.user))
        }
        fn model_name(&self) -> &str {
            "echo"
        }
        fn temperature(&self) -> f64 {
            0.0
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn stats(&self) -> OracleStats {
            OracleStats {
                calls: self.0.load(Ordering::SeqCst),
                cache_hits: 0,
            }
        }
    }

    #[test]
    fn second_identical_call_is_a_hit() {
        let dir = tempfile::tempdir().unwrap();
        let c = CachedOracle::new(Echo(AtomicU64::new(0)), dir.path().join("c.jsonl")).unwrap();
        assert_eq!(c.complete(&prompt("a")).unwrap(), "echo a");
        assert_eq!(c.complete(&prompt("a")).unwrap(), "echo a");
        assert_eq!(
            c.stats(),
            OracleStats {
                calls: 1,
                cache_hits: 1
            }
        );
    }

    #[test]
    fn one_character_difference_makes_two_entries() {
        let dir = tempfile::tempdir().unwrap();
        let c = CachedOracle::new(Echo(AtomicU64::new(0)), dir.path().join("c.jsonl")).unwrap();
        c.complete(&prompt("abc")).unwrap();
        c.complete(&prompt("abd")).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/c.jsonl");
        {
            let c = CachedOracle::new(Echo(AtomicU64::new(0)), &path).unwrap();
            c.complete(&prompt("x")).unwrap();
            c.complete(&prompt("y")).unwrap();
        }
        let c = CachedOracle::new(Echo(AtomicU64::new(0)), &path).unwrap();
        assert_eq!(c.complete(&prompt("x")).unwrap(), "echo x");
        assert_eq!(c.complete(&prompt("y")).unwrap(), "echo y");
        assert_eq!(c.stats().calls, 0);
        assert_eq!(c.stats().cache_hits, 2);
    }

    #[test]
    fn unwritable_path_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        // A directory cannot be opened for appending.
        match CachedOracle::new(Echo(AtomicU64::new(0)), dir.path()) {
            Err(Error::Config(_)) => {}
            Err(other) => panic!("expected config error, got {other:?}"),
            Ok(_) => panic!("expected config error"),
        }
    }

    #[test]
    fn key_depends_on_model_and_temperature() {
        let p = prompt("same");
        assert_ne!(cache_key("a", 0.0, &p), cache_key("b", 0.0, &p));
        assert_ne!(cache_key("a", 0.0, &p), cache_key("a", 0.7, &p));
        assert_eq!(cache_key("a", 0.0, &p), cache_key("a", 0.0, &p));
    }

    #[test]
    fn transparent_over_synthetic_oracle() {
        use crate::data::fixtures;
        use crate::oracle::{Payload, PromptMeta};
        let dir = tempfile::tempdir().unwrap();
        let raw = SyntheticOracle::new(SyntheticOracleParams::default()).unwrap();
        let cached = CachedOracle::new(
            SyntheticOracle::new(SyntheticOracleParams::default()).unwrap(),
            dir.path().join("c.jsonl"),
        )
        .unwrap();
        for panel in fixtures::panels(5, 3) {
            for r in panel.records() {
                let p = Prompt {
                    system: "s".into(),
                    user: format!("{:?}", r.key),
                    meta: PromptMeta::default(),
                    payload: Some(Payload::Simulation {
                        demographics: r.demographics,
                        context: r.context,
                        persona: None,
                    }),
                };
                assert_eq!(raw.complete(&p).unwrap(), cached.complete(&p).unwrap());
                assert_eq!(raw.complete(&p).unwrap(), cached.complete(&p).unwrap());
            }
        }
    }
}
