//! Run manifests written next to every output file as `<out>.manifest.json`.
//!
//! The data file itself carries no timestamps, so equal manifests (apart from
//! the wall-clock field) mean byte-identical outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: serde_json::Value,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_clock_seconds: f64,
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub struct Recorder {
    command: String,
    params: serde_json::Value,
    inputs: Vec<PathBuf>,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, params: impl Serialize) -> Self {
        Self {
            command: command.to_string(),
            params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes one sidecar per output.
    pub fn finish(self, outputs: &[PathBuf]) -> Result<()> {
        if outputs.is_empty() {
            return Ok(());
        }
        let manifest = RunManifest {
            command: self.command,
            params: self.params,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self
                .inputs
                .iter()
                .map(|p| digest(p))
                .collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        for out in outputs {
            let side = sidecar_path(out);
            std::fs::write(&side, &text).with_context(|| format!("writing {}", side.display()))?;
        }
        Ok(())
    }
}
