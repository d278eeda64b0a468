//! CSV tables and their JSON sidecars.

use hmclab::{HmcError, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub config_hash: String,
    pub git_describe: String,
    pub wall_time: f64,
    pub summary: serde_json::Value,
}

/// Hex SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// `out.csv` → `out.json`
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn write_csv<R: Serialize>(out: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(out).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| HmcError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HmcError::Io(e.to_string()))
}

/// Writes the rows to `out` and the sidecar next to it.
pub fn emit<R: Serialize, S: Serialize>(
    out: &Path,
    rows: &[R],
    summary: &S,
    config_text: &str,
    elapsed: Duration,
) -> Result<()> {
    create_parent(out)?;
    write_csv(out, rows)?;
    write_sidecar(out, summary, config_text, elapsed)
}

pub fn create_parent(out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_sidecar<S: Serialize>(out: &Path, summary: &S, config_text: &str, elapsed: Duration) -> Result<()> {
    let side = Sidecar {
        config_hash: config_hash(config_text),
        git_describe: git_describe(),
        wall_time: elapsed.as_secs_f64(),
        summary: serde_json::to_value(summary).map_err(|e| HmcError::Io(e.to_string()))?,
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| HmcError::Io(e.to_string()))?;
    std::fs::write(sidecar_path(out), json + "\n")?;
    Ok(())
}

pub fn csv_err(e: csv::Error) -> HmcError {
    HmcError::Io(e.to_string())
}
