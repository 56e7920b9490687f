//! Category-per-directory dataset layout and dataset statistics.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimal::Centi;
use crate::imaging::AHash64;

/// Scratch directory inside a dataset root; ignored by every listing.
pub const STAGING_DIR: &str = ".staging";

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("category `{0}` is empty after sanitizing")]
    SanitizeEmpty(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LayoutError + '_ {
    move |source| LayoutError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub url: String,
    pub hash: AHash64,
    pub category: String,
    pub rel_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub size_bytes: u64,
    pub pictures: u64,
    pub categories: u64,
    pub avg_pictures: Centi,
}

/// Lowercase, spaces become `_`, then everything outside `[a-z0-9_-]` is dropped.
pub fn sanitize_category(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c == ' ' { '_' } else { c })
        .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '_' || *c == '-')
        .collect()
}

fn is_hidden(name: &str) -> bool {
    name.starts_with('.')
}

fn is_jpg(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("jpg"))
}

/// `<16 hex>_<seq>.jpg` → hash
pub fn hash_from_file_name(name: &str) -> Option<AHash64> {
    let stem = name.strip_suffix(".jpg")?;
    let (hex, seq) = stem.split_once('_')?;
    if hex.len() != 16 || seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    hex.parse().ok()
}

/// Writer for one dataset root. Sequence numbers are assigned under a lock
/// so concurrent writers never pick the same file name.
pub struct Dataset {
    root: PathBuf,
    naming: Mutex<()>,
}

impl Dataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Dataset {
            root: root.into(),
            naming: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn staging_dir(&self) -> PathBuf {
        self.root.join(STAGING_DIR)
    }

    /// Writes `jpeg` to `<category>/<hash hex>_<seq>.jpg`, via a staged
    /// temp file and rename.
    pub fn store_image(
        &self,
        url: &str,
        category: &str,
        jpeg: &[u8],
        hash: AHash64,
    ) -> Result<ImageRecord, LayoutError> {
        let dir_name = sanitize_category(category);
        if dir_name.is_empty() {
            return Err(LayoutError::SanitizeEmpty(category.to_string()));
        }
        let staging = self.staging_dir();
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&staging).map_err(io_err(&staging))?;
        tmp.write_all(jpeg)
            .and_then(|_| tmp.as_file().sync_data())
            .map_err(io_err(tmp.path()))?;

        let dir = self.root.join(&dir_name);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let _guard = self.naming.lock().unwrap();
        let mut seq = 0u32;
        let file_name = loop {
            let candidate = format!("{}_{seq}.jpg", hash.to_hex());
            if !dir.join(&candidate).exists() {
                break candidate;
            }
            seq += 1;
        };
        let dest = dir.join(&file_name);
        tmp.persist(&dest).map_err(|e| LayoutError::Io {
            path: dest.clone(),
            source: e.error,
        })?;
        Ok(ImageRecord {
            url: url.to_string(),
            hash,
            category: category.to_string(),
            rel_path: PathBuf::from(dir_name).join(file_name),
        })
    }

    /// Deletes pipeline images whose hash is not in `keep`, plus anything
    /// left in the staging directory. Returns the number of images removed.
    pub fn remove_unregistered(&self, keep: &HashSet<AHash64>) -> Result<usize, LayoutError> {
        let staging = self.staging_dir();
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        if !self.root.exists() {
            return Ok(0);
        }
        let mut removed = 0;
        for dir in category_dirs(&self.root)? {
            for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
                let entry = entry.map_err(io_err(&dir))?;
                let name = entry.file_name();
                let Some(name) = name.to_str() else { continue };
                if let Some(h) = hash_from_file_name(name) {
                    if !keep.contains(&h) {
                        fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
                        removed += 1;
                    }
                }
            }
        }
        Ok(removed)
    }
}

/// Visible subdirectories of `root`, sorted by name.
pub fn category_dirs(root: &Path) -> Result<Vec<PathBuf>, LayoutError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name();
        if is_hidden(&name.to_string_lossy()) {
            continue;
        }
        if entry.file_type().map_err(io_err(root))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// `.jpg` files directly inside `dir`, sorted by file name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>, LayoutError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if entry.file_type().map_err(io_err(&path))?.is_file() && is_jpg(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn stats(root: &Path) -> Result<DatasetStats, LayoutError> {
    let mut size_bytes = 0u64;
    let mut pictures = 0u64;
    let dirs = category_dirs(root)?;
    for dir in &dirs {
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let path = entry.path();
            let meta = entry.metadata().map_err(io_err(&path))?;
            if meta.is_file() && is_jpg(&path) {
                pictures += 1;
                size_bytes += meta.len();
            }
        }
    }
    let categories = dirs.len() as u64;
    Ok(DatasetStats {
        size_bytes,
        pictures,
        categories,
        avg_pictures: Centi::ratio(pictures, categories),
    })
}

/// Sanitized category names of each dataset root.
pub fn category_sets(roots: &[PathBuf]) -> Result<Vec<BTreeSet<String>>, LayoutError> {
    roots
        .iter()
        .map(|root| {
            Ok(category_dirs(root)?
                .iter()
                .filter_map(|d| d.file_name().map(|n| sanitize_category(&n.to_string_lossy())))
                .filter(|n| !n.is_empty())
                .collect())
        })
        .collect()
}
