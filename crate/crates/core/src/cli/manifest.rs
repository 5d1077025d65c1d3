//! Per-command manifests recording the config hash, tool version and
//! output checksums.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::hex;
use crate::error::{GleeError, Result};

pub const TOOL_VERSION: &str = concat!("glee ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Incomplete,
    Complete,
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest-{command}.txt")
}

/// Refuses a directory holding outputs of a different configuration.
pub fn check_output_dir(dir: &Path, hash: &str) -> Result<()> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(GleeError::io(dir, e)),
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("manifest-") && n.ends_with(".txt"))
        .collect();
    names.sort();
    for name in names {
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(|e| GleeError::io(&path, e))?;
        let recorded = text
            .lines()
            .find_map(|l| l.strip_prefix("config_sha256 "))
            .unwrap_or("");
        if recorded != hash {
            return Err(GleeError::config(
                "output",
                format!(
                    "{} holds outputs of another configuration ({name} records {recorded}, this run is {hash})",
                    dir.display()
                ),
            ));
        }
    }
    Ok(())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| GleeError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Writes `manifest-<command>.txt`; `files` are paths relative to `dir`.
pub fn write_manifest(dir: &Path, command: &str, hash: &str, status: Status, files: &[String]) -> Result<()> {
    let mut sorted = files.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut text = format!(
        "tool {TOOL_VERSION}\ncommand {command}\nconfig_sha256 {hash}\nstatus {}\n",
        match status {
            Status::Complete => "complete",
            Status::Incomplete => "incomplete",
        }
    );
    for f in &sorted {
        let path = dir.join(f);
        if path.exists() {
            text.push_str(&format!("file {} {f}\n", file_sha256(&path)?));
        }
    }
    let path = dir.join(manifest_name(command));
    fs::write(&path, text).map_err(|e| GleeError::io(&path, e))
}
