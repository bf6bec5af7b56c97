//! `manifest.json`: everything needed to regenerate an output directory.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{self, DataPaths};

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_file: Option<FileHash>,
    /// The configuration as parsed, defaults filled in.
    pub config: Option<RunConfig>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<String>,
    pub extra: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_file: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn with_config(
        command: &'static str,
        cfg: &RunConfig,
        path: &Path,
        inputs: &DataPaths,
    ) -> Result<Self> {
        let mut m = Self::new(command, cfg.seed);
        m.config_file = Some(hash(path)?);
        m.config = Some(cfg.clone());
        m.add_inputs(inputs)?;
        Ok(m)
    }

    pub fn add_inputs(&mut self, inputs: &DataPaths) -> Result<()> {
        for p in inputs.files() {
            self.inputs.push(hash(p)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join("manifest.json"), self)
    }
}

fn hash(path: &Path) -> Result<FileHash> {
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: io::sha256_file(path)?,
    })
}
