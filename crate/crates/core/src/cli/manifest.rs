use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Provenance record written next to every output file as
/// `<output>.manifest.json`, so the output itself stays byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 over the input documents, in argument order.
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub output: String,
}

pub fn hash_inputs(inputs: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for i in inputs {
        h.update((i.len() as u64).to_le_bytes());
        h.update(i);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl RunManifest {
    pub fn new(command: &str, inputs: &[&[u8]], seed: Option<u64>, started_at: String, output: &Path) -> Self {
        Self {
            command: command.to_string(),
            config_hash: hash_inputs(inputs),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: now(),
            output: output.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        }
    }

    pub fn write_for(&self, output: &Path) -> Result<()> {
        std::fs::write(manifest_path(output), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
