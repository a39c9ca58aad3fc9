//! File formats: headerless point CSVs, labelled datasets, fitted models, the on-disk
//! null cache and run manifests.
//!
//! Every parser has a `&str`/`&[u8]` entry point that never panics on malformed input;
//! the path-based helpers only add file access on top of them.

mod cache;
mod dataset;
mod manifest;
mod model;
mod points;

use std::path::Path;

use crate::error::{Error, Result};

pub use cache::{decode_cache_entry, encode_cache_entry, DiskNullCache};
pub use dataset::{
    detect_delimiter, ingest_csv, parse_dataset, split_by_label, subsample, Dataset, IngestOptions,
};
pub use manifest::{digest_bytes, digest_file, RunManifest};
pub use model::ModelFile;
pub use points::{parse_points_csv, read_points_csv, write_points_csv};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
