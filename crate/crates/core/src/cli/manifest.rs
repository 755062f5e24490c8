use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::Result;

/// Everything needed to rerun a command: written next to each output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub version: &'static str,
    pub parameters: serde_json::Value,
    pub master_seed: Option<u64>,
    pub derived_seeds: BTreeMap<String, u64>,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(argv: &[OsString], parameters: serde_json::Value, master_seed: Option<u64>, started_at: f64) -> Self {
        RunManifest {
            command_line: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            version: env!("CARGO_PKG_VERSION"),
            parameters,
            master_seed,
            derived_seeds: BTreeMap::new(),
            started_at,
            finished_at: started_at,
        }
    }

    pub fn write_for(mut self, output: &Path) -> Result<PathBuf> {
        self.finished_at = now();
        let path = manifest_path(output);
        fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }
}
