use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// What was asked for and a hash of everything it read. Written before the
/// work starts and never touched again.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_paths: Vec<String>,
    pub seed: Option<u64>,
    pub input_hash: String,
    pub out_dir: PathBuf,
    pub tool_version: String,
}

/// sha256 over each named input, framed by its name and length.
pub fn hash_inputs(inputs: &[(String, Vec<u8>)]) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in inputs {
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, config_paths: Vec<String>, seed: Option<u64>, inputs: &[(String, Vec<u8>)], out_dir: &Path) -> Self {
        Self {
            command: command.into(),
            args,
            config_paths,
            seed,
            input_hash: hash_inputs(inputs),
            out_dir: out_dir.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let p = dir.join("manifest.json");
        std::fs::write(&p, serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")?;
        Ok(p)
    }
}
