//! Per-directory record of how an output was produced.

use std::path::{Path, PathBuf};

use personaload::digest::bytes_hex;
use personaload::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Config,
    pub inputs: Vec<InputChecksum>,
    pub seed: u64,
    pub templates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
    pub oracle_calls: u64,
    pub cache_hits: u64,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Checksums of `path`, or of every file directly inside it when it is a
/// directory (manifests excluded), in name order.
pub fn checksums(path: &Path) -> Result<Vec<InputChecksum>> {
    let mut files = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE))
            .collect();
        entries.sort();
        files.extend(entries);
    } else {
        files.push(path.to_path_buf());
    }
    files
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            Ok(InputChecksum {
                sha256: bytes_hex(&bytes),
                path: p,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn start(command: &str, config: &Config) -> Self {
        let t = now();
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            inputs: Vec::new(),
            seed: config.seed,
            templates: Vec::new(),
            oracle: None,
            oracle_calls: 0,
            cache_hits: 0,
            started_at: t.clone(),
            finished_at: t,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.extend(checksums(path)?);
        Ok(())
    }

    pub fn template(&mut self, version: &str) {
        if !self.templates.iter().any(|t| t == version) {
            self.templates.push(version.into());
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_at = now();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        personaload::jsonl::write_json(&dir.join(MANIFEST_FILE), &self)
    }

    /// Recomputes the input checksums and reports the first mismatch.
    pub fn verify_inputs(&self) -> Result<()> {
        for i in &self.inputs {
            let bytes = std::fs::read(&i.path).map_err(|e| Error::io(&i.path, e))?;
            if bytes_hex(&bytes) != i.sha256 {
                return Err(Error::Input(format!("{} changed since the run", i.path.display())));
            }
        }
        Ok(())
    }
}
