use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Bumped whenever an output schema changes.
pub const FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of the effective configuration's canonical JSON.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let text = serde_json::to_string(config)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn create_file(&self, name: &str) -> Result<fs::File> {
        let p = self.path(name);
        fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
    }
}

#[derive(Serialize)]
pub struct ErrorReport {
    pub format_version: u32,
    pub command: String,
    pub error: String,
    pub causes: Vec<String>,
}

impl ErrorReport {
    pub fn new(command: &str, err: &anyhow::Error) -> Self {
        ErrorReport {
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            error: err.to_string(),
            causes: err.chain().skip(1).map(|c| c.to_string()).collect(),
        }
    }
}
