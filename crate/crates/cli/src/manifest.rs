//! Run manifests: content hashes of inputs and outputs, the resolved
//! configuration, and timing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot hash {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct ManifestJson<'a> {
    command: &'a str,
    config: &'a RunConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    versions: BTreeMap<&'static str, &'static str>,
    threads: usize,
    wall_time_ms: u64,
}

/// Collects the files a command read and wrote, then renders
/// `manifest.json` with their content hashes.
pub struct Manifest {
    command: String,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn start(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Registers every regular file under a directory as an input.
    pub fn input_dir(&mut self, dir: &Path) -> Result<()> {
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(dir)
            .with_context(|| format!("cannot list {}", dir.display()))?
        {
            let path = entry?.path();
            if path.is_file() {
                paths.push(path);
            }
        }
        paths.sort();
        self.inputs.extend(paths);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn elapsed_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn write(self, config: &RunConfig) -> Result<()> {
        let hash_all = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
                .collect()
        };
        let manifest = ManifestJson {
            command: &self.command,
            config,
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            versions: [("demand-cli", env!("CARGO_PKG_VERSION"))].into_iter().collect(),
            threads: rayon::current_num_threads(),
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        };
        std::fs::create_dir_all(&config.out)
            .with_context(|| format!("cannot create {}", config.out.display()))?;
        let path = config.out.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}
