//! Run manifests: enough to rerun a command and check its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Written next to every artifact. Contains no timestamps or absolute
/// paths, so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub config_hash: String,
    pub config: String,
    pub seed: Option<u64>,
    pub versions: BTreeMap<&'static str, &'static str>,
    /// Input file name → sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → sha256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &'static str, config: String, seed: Option<u64>) -> Self {
        let versions = BTreeMap::from([
            ("csiq", env!("CARGO_PKG_VERSION")),
            ("csiq-core", csiq_core::VERSION),
        ]);
        Self {
            command,
            config_hash: sha256_hex(config.as_bytes()),
            config,
            seed,
            versions,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(file_name(path), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes an output file and records its digest.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(file_name(path), sha256_hex(bytes));
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Manifest location for a single-file output: `<file>.manifest.json`.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
