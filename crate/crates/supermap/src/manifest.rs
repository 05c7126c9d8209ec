//! Run manifests: what a command was asked to do and what it produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::{digest_of, write_json};

/// `git describe` of the build, or `unknown` outside a repository.
pub const BUILD_DESCRIBE: &str = env!("SUPERMAP_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub build: String,
    /// Fully resolved configuration after file and flag layering.
    pub config: serde_json::Value,
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    /// Wall time per stage in seconds, plus `total`.
    pub wall_seconds: BTreeMap<String, f64>,
}

/// Collects a [`RunManifest`] while a command runs.
pub struct RunRecorder {
    manifest: RunManifest,
    start: Instant,
    stage: Option<(String, Instant)>,
}

impl RunRecorder {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        let value = serde_json::to_value(config).expect("serializable configuration");
        RunRecorder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                build: BUILD_DESCRIBE.to_string(),
                config_digest: digest_of(&value),
                config: value,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                wall_seconds: BTreeMap::new(),
            },
            start: Instant::now(),
            stage: None,
        }
    }

    pub fn config_digest(&self) -> &str {
        &self.manifest.config_digest
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    /// Ends the running stage, if any, and starts timing `name`.
    pub fn stage(&mut self, name: &str) {
        self.end_stage();
        self.stage = Some((name.to_string(), Instant::now()));
    }

    fn end_stage(&mut self) {
        if let Some((name, t)) = self.stage.take() {
            self.manifest.wall_seconds.insert(name, t.elapsed().as_secs_f64());
        }
    }

    /// Stamps the total wall time and writes the manifest to `path`.
    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.end_stage();
        self.manifest
            .wall_seconds
            .insert("total".to_string(), self.start.elapsed().as_secs_f64());
        write_json(path, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Conventional location of the run manifest for an output stem.
pub fn run_manifest_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.run.json"))
}
