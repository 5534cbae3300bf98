//! File interchange: PFM depth rasters, PNG images and masks, binary PLY
//! clouds, and the JSON descriptions of rigs, trajectories, scene scripts,
//! and synthetic scenes. All writers are atomic (temp file + rename) and all
//! formats are deterministic byte-for-byte for identical inputs.

pub mod bundle;
pub mod json;
pub mod pfm;
pub mod ply;
pub mod png;

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("png error on {path}: {source}")]
    Png { path: String, source: image::ImageError },
    #[error("json error on {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("invalid data for {path}: {message}")]
    Invalid { path: String, message: String },
}

impl IoError {
    pub(crate) fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.display().to_string(), source }
    }

    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format { path: path.display().to_string(), message: message.into() }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        IoError::Invalid { path: path.display().to_string(), message: message.into() }
    }
}

/// Write bytes atomically: stage into a sibling temp file, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| IoError::file(path, e))?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp-{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or("bin"),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).map_err(|e| IoError::file(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| IoError::file(path, e))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::file(path, e))
}
