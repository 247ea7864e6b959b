use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const SUPPORTED_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "ppm"];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SampleRef {
    /// Location on disk at scan time.
    pub path: PathBuf,
    /// Path relative to the dataset root, `/`-separated.
    pub rel_path: String,
    pub class_index: usize,
    pub class_name: String,
}

/// Class-labelled image corpus in deterministic order.
///
/// Classes are the top-level directory names in byte order; samples are
/// ordered by class, then by relative path.
#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub samples: Vec<SampleRef>,
    pub counts: Vec<usize>,
    /// Files skipped for an unsupported extension.
    pub skipped: Vec<PathBuf>,
}

impl DatasetIndex {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| SUPPORTED_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        entries.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    entries.sort_by(|a, b| a.as_os_str().as_encoded_bytes().cmp(b.as_os_str().as_encoded_bytes()));
    Ok(entries)
}

fn collect_files(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    for path in sorted_entries(dir)? {
        if path.is_dir() {
            collect_files(&path, files)?;
        } else {
            files.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Recursively indexes `root/<class>/**/<image>`.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::DatasetStructure(format!(
            "dataset root {} does not exist or is not a directory",
            root.display()
        )));
    }
    let mut classes = Vec::new();
    let mut skipped = Vec::new();
    let mut class_dirs = Vec::new();
    for path in sorted_entries(root)? {
        if path.is_dir() {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            classes.push(name);
            class_dirs.push(path);
        } else {
            skipped.push(path);
        }
    }
    // byte order of the names, independent of how the OS sorts paths
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| classes[a].as_bytes().cmp(classes[b].as_bytes()));
    let classes: Vec<String> = order.iter().map(|&i| classes[i].clone()).collect();
    let class_dirs: Vec<PathBuf> = order.iter().map(|&i| class_dirs[i].clone()).collect();

    if classes.len() < 2 {
        return Err(Error::DatasetStructure(format!(
            "need at least 2 class directories under {}, found {}",
            root.display(),
            classes.len()
        )));
    }

    let mut samples = Vec::new();
    let mut counts = Vec::with_capacity(classes.len());
    for (class_index, (name, dir)) in classes.iter().zip(&class_dirs).enumerate() {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        let mut kept: Vec<SampleRef> = Vec::new();
        for file in files {
            if is_supported(&file) {
                kept.push(SampleRef {
                    rel_path: relative(root, &file),
                    path: file,
                    class_index,
                    class_name: name.clone(),
                });
            } else {
                skipped.push(file);
            }
        }
        if kept.is_empty() {
            return Err(Error::DatasetStructure(format!(
                "class '{name}' contains no supported images"
            )));
        }
        kept.sort_by(|a, b| a.rel_path.as_bytes().cmp(b.rel_path.as_bytes()));
        counts.push(kept.len());
        samples.extend(kept);
    }
    if !skipped.is_empty() {
        log::info!("skipped {} unsupported file(s) under {}", skipped.len(), root.display());
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        classes,
        samples,
        counts,
        skipped,
    })
}
