use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use terragan::{Error, Result};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

/// Everything needed to rerun a command: the resolved config (which
/// includes the seed) plus digests of what was read and written.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: &'static str,
    pub config: RunConfig,
    pub config_digest: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub elapsed_seconds: f64,
    pub summary: Value,
}

/// Collects the artifacts of one command while it runs.
pub struct Run {
    pub config: RunConfig,
    command: &'static str,
    started: Instant,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
}

impl Run {
    pub fn new(command: &'static str, config: RunConfig) -> Result<Self> {
        fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
        Ok(Self {
            config,
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(Artifact::of(path)?);
        Ok(())
    }

    /// Write `report-<command>.json` next to the outputs.
    pub fn finish(self, summary: Value) -> Result<RunReport> {
        let report = RunReport {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_digest: self.config.digest()?,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            summary,
        };
        let path = report.config.out.join(format!("report-{}.json", report.command));
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(report)
    }
}
