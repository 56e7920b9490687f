use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::layout::{category_dirs, image_files};
use crate::rng::{fnv1a64, Prng};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    /// `<category>/<file>` relative to the dataset root.
    pub rel_path: String,
    /// `<category>/<file>` relative to the holdout directory.
    pub holdout_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub category: String,
    pub available: usize,
}

/// Which images were moved out of a dataset, written before any move so an
/// interrupted isolation can still be restored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub per_cat: usize,
    pub root: PathBuf,
    pub holdout: PathBuf,
    pub entries: Vec<SplitEntry>,
    pub shortfalls: Vec<Shortfall>,
}

impl SplitManifest {
    pub fn manifest_path(&self) -> PathBuf {
        self.holdout.join(MANIFEST_FILE)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }

    pub fn load(path: &Path) -> Result<SplitManifest, EvalError> {
        let bytes = fs::read(path).map_err(|e| EvalError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| EvalError::BadManifest(format!("{}: {e}", path.display())))
    }

    /// Holdout files grouped as (category, absolute holdout path).
    pub fn holdout_images(&self) -> Vec<(String, PathBuf)> {
        self.entries
            .iter()
            .map(|e| {
                let category = e.holdout_path.split('/').next().unwrap_or_default().to_string();
                (category, self.holdout.join(&e.holdout_path))
            })
            .collect()
    }
}

/// Default holdout location for a dataset root: a sibling `<root>.holdout`.
pub fn default_holdout_dir(root: &Path) -> PathBuf {
    let mut name = root
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "dataset".into());
    name.push(".holdout");
    root.with_file_name(name)
}

/// Moves `per_cat` pseudo-randomly chosen images of every category into
/// `holdout/<category>/`. Selection per category: file names sorted
/// ascending, Fisher-Yates shuffled with `Prng(seed ^ fnv1a64(category))`,
/// first `per_cat` taken. Categories with fewer images give up all of them
/// and are listed as shortfalls.
pub fn isolate_subset(root: &Path, holdout: &Path, per_cat: usize, seed: u64) -> Result<SplitManifest, EvalError> {
    isolate_subset_filtered(root, holdout, per_cat, seed, None)
}

/// As [`isolate_subset`], limited to the given categories when `only` is set.
pub fn isolate_subset_filtered(
    root: &Path,
    holdout: &Path,
    per_cat: usize,
    seed: u64,
    only: Option<&BTreeSet<String>>,
) -> Result<SplitManifest, EvalError> {
    let manifest_path = holdout.join(MANIFEST_FILE);
    if manifest_path.exists() {
        return Err(EvalError::AlreadyIsolated(manifest_path));
    }
    let mut entries = Vec::new();
    let mut shortfalls = Vec::new();
    for dir in category_dirs(root)? {
        let category = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| EvalError::BadManifest(format!("non UTF-8 category {}", dir.display())))?
            .to_string();
        if only.is_some_and(|set| !set.contains(&category)) {
            continue;
        }
        let mut names: Vec<String> = image_files(&dir)?
            .iter()
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
            .collect();
        names.sort();
        if names.len() < per_cat {
            shortfalls.push(Shortfall {
                category: category.clone(),
                available: names.len(),
            });
        }
        let mut rng = Prng::new(seed ^ fnv1a64(category.as_bytes()));
        rng.shuffle(&mut names);
        for name in names.into_iter().take(per_cat) {
            let rel = format!("{category}/{name}");
            entries.push(SplitEntry {
                rel_path: rel.clone(),
                holdout_path: rel,
            });
        }
    }
    let manifest = SplitManifest {
        seed,
        per_cat,
        root: root.to_path_buf(),
        holdout: holdout.to_path_buf(),
        entries,
        shortfalls,
    };
    fs::create_dir_all(holdout).map_err(|e| EvalError::io(holdout, e))?;
    write_atomic(&manifest_path, &manifest.to_bytes())?;
    for e in &manifest.entries {
        let dest = holdout.join(&e.holdout_path);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).map_err(|err| EvalError::io(parent, err))?;
        }
        move_file(&root.join(&e.rel_path), &dest)?;
    }
    Ok(manifest)
}

/// Moves every holdout file back. All holdout files are checked before the
/// first move; afterwards the manifest and the emptied holdout directories
/// are removed.
pub fn restore_subset(manifest: &SplitManifest) -> Result<(), EvalError> {
    for e in &manifest.entries {
        let src = manifest.holdout.join(&e.holdout_path);
        if !src.is_file() {
            return Err(EvalError::MissingHoldout(src));
        }
    }
    for e in &manifest.entries {
        let dest = manifest.root.join(&e.rel_path);
        if dest.exists() {
            return Err(EvalError::RestoreConflict(dest));
        }
    }
    for e in &manifest.entries {
        let dest = manifest.root.join(&e.rel_path);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).map_err(|err| EvalError::io(parent, err))?;
        }
        move_file(&manifest.holdout.join(&e.holdout_path), &dest)?;
    }
    let mp = manifest.manifest_path();
    if mp.exists() {
        fs::remove_file(&mp).map_err(|e| EvalError::io(&mp, e))?;
    }
    remove_empty_dirs(&manifest.holdout);
    Ok(())
}

fn remove_empty_dirs(dir: &Path) {
    if let Ok(rd) = fs::read_dir(dir) {
        for entry in rd.flatten() {
            if entry.file_type().is_ok_and(|t| t.is_dir()) {
                remove_empty_dirs(&entry.path());
            }
        }
    }
    let _ = fs::remove_dir(dir);
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| EvalError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| EvalError::io(path, e))
}

/// rename, falling back to copy + delete across filesystems.
pub(crate) fn move_file(src: &Path, dest: &Path) -> Result<(), EvalError> {
    match fs::rename(src, dest) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::CrossesDevices => {
            fs::copy(src, dest).map_err(|e| EvalError::io(dest, e))?;
            fs::remove_file(src).map_err(|e| EvalError::io(src, e))
        }
        Err(e) => Err(EvalError::io(src, e)),
    }
}
