use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{SampleRef, SplitAssignment};

pub const MANIFEST_FORMAT: &str = "customcnn-split/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub class: usize,
}

/// Serialized split: enough to reproduce the exact partition of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format: String,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub classes: Vec<String>,
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

fn entries(samples: &[SampleRef]) -> Vec<ManifestEntry> {
    samples
        .iter()
        .map(|s| ManifestEntry {
            path: s.rel_path.clone(),
            class: s.class_index,
        })
        .collect()
}

impl SplitManifest {
    pub fn from_assignment(split: &SplitAssignment) -> Self {
        SplitManifest {
            format: MANIFEST_FORMAT.to_string(),
            seed: split.seed,
            ratios: split.ratios,
            classes: split.classes.clone(),
            train: entries(&split.train),
            val: entries(&split.val),
            test: entries(&split.test),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SplitManifest = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "split manifest",
            detail: e.to_string(),
        })?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                what: "split manifest",
                detail: format!("unsupported format '{}'", m.format),
            });
        }
        let c = m.classes.len();
        if let Some(e) = m.train.iter().chain(&m.val).chain(&m.test).find(|e| e.class >= c) {
            return Err(Error::Format {
                what: "split manifest",
                detail: format!("entry {} has class {} of {c}", e.path, e.class),
            });
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the serialized manifest, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolves entries against `root`. Every missing file is listed in the error.
    pub fn to_assignment(&self, root: &Path) -> Result<SplitAssignment> {
        let mut missing = Vec::new();
        let mut resolve = |list: &[ManifestEntry]| -> Vec<SampleRef> {
            list.iter()
                .map(|e| {
                    let path = root.join(&e.path);
                    if !path.is_file() {
                        missing.push(path.display().to_string());
                    }
                    SampleRef {
                        path,
                        rel_path: e.path.clone(),
                        class_index: e.class,
                        class_name: self.classes[e.class].clone(),
                    }
                })
                .collect()
        };
        let train = resolve(&self.train);
        let val = resolve(&self.val);
        let test = resolve(&self.test);
        if !missing.is_empty() {
            return Err(Error::DatasetStructure(format!(
                "{} file(s) listed in the manifest are missing: {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        Ok(SplitAssignment {
            seed: self.seed,
            ratios: self.ratios,
            classes: self.classes.clone(),
            train,
            val,
            test,
            warnings: Vec::new(),
        })
    }
}
