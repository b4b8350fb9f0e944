use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{preprocess, read_slice_file, SliceStack, TargetSlice};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_json_pretty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split {other:?}"))),
        }
    }
}

/// One slice position of one subject, with one single-channel MSL file per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject: String,
    pub slice: usize,
    /// Modality name → file path, relative to the manifest's directory.
    pub files: BTreeMap<String, PathBuf>,
}

/// The JSON index of a corpus split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub subjects: Vec<String>,
    pub modalities: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    pub split: Split,
    /// Directory that relative file paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut manifest: CorpusManifest = read_json(path)?;
        manifest.root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        manifest.validate_keys()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_pretty(path, self)
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.root.join(file)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that (subject, slice) keys are unique and that each entry names
    /// every listed modality.
    pub fn validate_keys(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.subject.as_str(), e.slice)) {
                return Err(Error::Data(format!(
                    "duplicate entry for subject {} slice {} in {} split",
                    e.subject, e.slice, self.split
                )));
            }
            for m in &self.modalities {
                if !e.files.contains_key(m) {
                    return Err(Error::Data(format!(
                        "entry {}/{} lacks modality {m}",
                        e.subject, e.slice
                    )));
                }
            }
        }
        Ok(())
    }

    /// Key validation plus a parse of every referenced file.
    pub fn validate_files(&self) -> Result<()> {
        self.validate_keys()?;
        for e in &self.entries {
            for file in e.files.values() {
                read_slice_file(&self.resolve(file))?;
            }
        }
        Ok(())
    }

    fn read_channel(&self, entry: &ManifestEntry, modality: &str) -> Result<SliceStack> {
        let file = entry.files.get(modality).ok_or_else(|| {
            Error::Argument(format!(
                "modality {modality:?} not in corpus (have {:?})",
                self.modalities
            ))
        })?;
        let stack = read_slice_file(&self.resolve(file))?;
        if stack.channels() != 1 {
            return Err(Error::Data(format!(
                "{} has {} channels; corpus files hold one modality each",
                file.display(),
                stack.channels()
            )));
        }
        Ok(stack)
    }

    /// Loads one entry as a preprocessed input stack (in `inputs` order) and
    /// its preprocessed target slice.
    pub fn load_pair(
        &self,
        entry: &ManifestEntry,
        inputs: &[String],
        target: &str,
        canonical_size: usize,
    ) -> Result<(SliceStack, TargetSlice)> {
        let mut planes = Vec::with_capacity(inputs.len());
        for m in inputs {
            let stack = preprocess(&self.read_channel(entry, m)?, canonical_size)?;
            planes.push(stack.into_data());
        }
        let refs: Vec<&[f32]> = planes.iter().map(Vec::as_slice).collect();
        let stack = SliceStack::from_planes(inputs.to_vec(), canonical_size, canonical_size, &refs)?;
        let t = preprocess(&self.read_channel(entry, target)?, canonical_size)?;
        let t = TargetSlice::new(target, canonical_size, canonical_size, t.into_data())?;
        Ok((stack, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(subject: &str, slice: usize) -> ManifestEntry {
        let mut files = BTreeMap::new();
        files.insert("t1".to_string(), PathBuf::from(format!("{subject}_{slice}_t1.msl")));
        ManifestEntry {
            subject: subject.into(),
            slice,
            files,
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let m = CorpusManifest {
            subjects: vec!["a".into()],
            modalities: vec!["t1".into()],
            entries: vec![entry("a", 0), entry("a", 0)],
            split: Split::Train,
            root: PathBuf::new(),
        };
        assert!(m.validate_keys().is_err());
    }

    #[test]
    fn json_uses_documented_fields() {
        let m = CorpusManifest {
            subjects: vec!["a".into()],
            modalities: vec!["t1".into()],
            entries: vec![entry("a", 3)],
            split: Split::Test,
            root: PathBuf::new(),
        };
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["entries", "modalities", "split", "subjects"]);
        assert_eq!(v["split"], "test");
    }

    #[test]
    fn missing_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = CorpusManifest {
            subjects: vec!["a".into()],
            modalities: vec!["t1".into()],
            entries: vec![entry("a", 0)],
            split: Split::Train,
            root: dir.path().to_path_buf(),
        };
        assert!(matches!(m.validate_files(), Err(Error::Io { .. })));
    }
}
