//! Artifact writing. Output is a pure function of the inputs so that re-runs
//! are byte-identical.

use std::path::Path;

use serde::Serialize;

use crate::error::{PipelineError, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(format!("creating {}", dir.display()), e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(format!("writing {}", path.display()), e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = crate::config::read_text(path)?;
    Ok(serde_json::from_str(&text)?)
}
