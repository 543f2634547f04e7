use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use graphcast::config::RunConfig;
use graphcast::Result;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a benchmark directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub source_revision: Option<String>,
    pub config: RunConfig,
    pub data_dir: String,
    /// SHA-256 over the input files.
    pub dataset_fingerprint: String,
    pub products: Vec<String>,
    /// Initialization seed per product.
    pub seeds: BTreeMap<String, u64>,
    pub failed_rows: usize,
    pub started_at: String,
    pub finished_at: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `GRAPHCAST_SOURCE_REVISION`, else the git HEAD of the source tree.
    pub fn detect_revision() -> Option<String> {
        if let Ok(rev) = std::env::var("GRAPHCAST_SOURCE_REVISION") {
            return Some(rev);
        }
        let out = Command::new("git")
            .args(["-C", env!("CARGO_MANIFEST_DIR"), "rev-parse", "HEAD"])
            .output()
            .ok()?;
        out.status
            .success()
            .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    /// The fields that determine report contents; equal digests mean
    /// identical reports.
    pub fn inputs_key(&self) -> String {
        let cfg = serde_json::to_string(&self.config).expect("config serializes");
        format!("{}|{}|{}", self.tool_version, self.dataset_fingerprint, cfg)
    }
}
