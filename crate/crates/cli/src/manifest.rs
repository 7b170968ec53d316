//! The per-run record written next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub argv: Vec<String>,
    /// Every option after defaults were applied.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub git_describe: String,
    pub version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seed,
            started_at: Utc::now(),
            finished_at: None,
            git_describe: env!("TSCEPTION_GIT_DESCRIBE").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        })
    }

    /// Stamps the finish time and writes the manifest to `path`.
    pub fn finish(mut self, outputs: Vec<PathBuf>, path: &Path) -> Result<PathBuf> {
        self.finished_at = Some(Utc::now());
        self.outputs = outputs;
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        log::info!("run manifest: {}", path.display());
        Ok(path.to_path_buf())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Manifest location for a command whose output is a single file.
pub fn manifest_beside(file: &Path) -> PathBuf {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.with_file_name(format!("{stem}.{RUN_MANIFEST}"))
}
