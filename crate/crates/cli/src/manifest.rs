use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record written next to every output as `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
}

pub struct Recorder {
    subcommand: String,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    started_unix: f64,
    started: Instant,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| crate::error::CliError::from(e).at(path))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl Recorder {
    pub fn start<C: Serialize>(subcommand: &str, seed: Option<u64>, config: &C) -> CliResult<Self> {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        Ok(Self {
            subcommand: subcommand.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            started_unix,
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(FileDigest { path: path.to_path_buf(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Write the manifest beside `primary`, covering every listed output.
    pub fn finish(self, primary: &Path, outputs: &[&Path]) -> CliResult<PathBuf> {
        let outputs = outputs
            .iter()
            .map(|p| Ok(FileDigest { path: p.to_path_buf(), sha256: sha256_file(p)? }))
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = RunManifest {
            subcommand: self.subcommand,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: self.config,
            inputs: self.inputs,
            outputs,
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| crate::error::CliError::from(e).at(&path))?;
        Ok(path)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}
