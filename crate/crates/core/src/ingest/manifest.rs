//! Dataset manifests and subject-disjoint splitting.

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::skeleton::SkeletonSequence;

/// Sampling interval of 50 fps capture.
pub const DEFAULT_DT: f64 = 0.02;

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: String,
    pub label: String,
    /// Per-file override of the manifest sampling interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub labels: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(dt: f64, labels: Vec<String>) -> Self {
        Self { dt, labels, entries: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Manifest(format!("dt must be positive, got {}", self.dt)));
        }
        let unique: BTreeSet<&String> = self.labels.iter().collect();
        if unique.len() != self.labels.len() {
            return Err(Error::Manifest("duplicate label in vocabulary".into()));
        }
        for e in &self.entries {
            if e.subject.is_empty() {
                return Err(Error::Manifest(format!("{}: empty subject id", e.path.display())));
            }
            if !self.labels.contains(&e.label) {
                return Err(Error::Manifest(format!(
                    "{}: label `{}` not in vocabulary",
                    e.path.display(),
                    e.label
                )));
            }
            if let Some(dt) = e.dt {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(Error::Manifest(format!("{}: dt must be positive", e.path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.at_entry(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::descriptor::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.subject.as_str()).collect()
    }

    pub fn entry_dt(&self, entry: &ManifestEntry) -> f64 {
        entry.dt.unwrap_or(self.dt)
    }

    /// Entry path resolved against the manifest's directory.
    pub fn resolve(&self, base: &Path, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        }
    }

    /// Reads one entry's sequence; errors name the file.
    pub fn load_sequence<T: Scalar>(&self, base: &Path, entry: &ManifestEntry) -> Result<SkeletonSequence<T>> {
        let path = self.resolve(base, entry);
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        super::csv::parse_sequence_csv(BufReader::new(f), self.entry_dt(entry), &entry.subject, Some(&entry.label))
            .map_err(|e| e.at_entry(&path))
    }

    fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Self { dt: self.dt, labels: self.labels.clone(), entries }
    }
}

/// Subject ids assigned to each split.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(s.as_str()) {
                return Err(Error::Split(format!("subject `{s}` assigned to more than one split")));
            }
        }
        Ok(())
    }

    fn owner(&self, subject: &str) -> Option<usize> {
        [&self.train, &self.val, &self.test].iter().position(|set| set.iter().any(|s| s == subject))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
}

/// Partitions entries by subject, preserving entry order within each split.
pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut parts: [Vec<ManifestEntry>; 3] = Default::default();
    for e in &manifest.entries {
        let owner = spec
            .owner(&e.subject)
            .ok_or_else(|| Error::Split(format!("subject `{}` not assigned to any split", e.subject)))?;
        parts[owner].push(e.clone());
    }
    let [train, val, test] = parts;
    Ok(DatasetSplit {
        train: manifest.with_entries(train),
        val: manifest.with_entries(val),
        test: manifest.with_entries(test),
    })
}
