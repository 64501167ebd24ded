use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{read_sequence_checked, SequenceHeader};
use super::{PoseSequence, PressureSequence};
use crate::config::SkeletonSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub sequence_id: String,
    /// Path relative to the manifest's directory.
    pub file: PathBuf,
    pub num_frames: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid_w: usize,
    pub grid_h: usize,
    pub num_joints: usize,
    pub skeleton: SkeletonSpec,
    pub sequences: Vec<ManifestEntry>,
    /// Directory the manifest was loaded from; file paths resolve against it.
    #[serde(skip)]
    pub root: PathBuf,
}

/// A loaded sequence with its manifest metadata.
#[derive(Debug, Clone)]
pub struct LoadedSequence<S> {
    pub id: String,
    pub split: Split,
    pub pressure: PressureSequence<S>,
    pub pose: PoseSequence<S>,
}

impl DatasetManifest {
    pub fn header_for(&self, entry: &ManifestEntry) -> SequenceHeader {
        SequenceHeader {
            frames: entry.num_frames,
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            joints: self.num_joints,
        }
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.file)
    }

    /// Unique ids, consistent skeleton, and (when `check_files`) every file
    /// present with a header matching the manifest.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.skeleton.num_joints() != self.num_joints {
            return Err(Error::Manifest(format!(
                "num_joints {} disagrees with skeleton ({} joints)",
                self.num_joints,
                self.skeleton.num_joints()
            )));
        }
        let mut ids = HashSet::new();
        for e in &self.sequences {
            if !ids.insert(e.sequence_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate sequence_id {:?}",
                    e.sequence_id
                )));
            }
            if check_files {
                let path = self.path_of(e);
                let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
                let header = super::format::decode_header(&path, &bytes)?;
                if header != self.header_for(e) {
                    return Err(Error::DimensionMismatch {
                        path,
                        detail: format!(
                            "file header {header:?} but manifest expects {:?}",
                            self.header_for(e)
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate(true)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.sequences.iter().filter(move |e| e.split == split)
    }

    pub fn load_split<S: Scalar>(&self, split: Split) -> Result<Vec<LoadedSequence<S>>> {
        self.entries(split)
            .map(|e| {
                let (pressure, pose) = read_sequence_checked(&self.path_of(e), self.header_for(e))?;
                Ok(LoadedSequence {
                    id: e.sequence_id.clone(),
                    split,
                    pressure,
                    pose,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> DatasetManifest {
        DatasetManifest {
            format_version: FORMAT_VERSION,
            grid_w: 4,
            grid_h: 4,
            num_joints: 14,
            skeleton: SkeletonSpec::default_14(),
            sequences: vec![
                ManifestEntry {
                    sequence_id: "a".into(),
                    file: "a.pmt".into(),
                    num_frames: 2,
                    split: Split::Train,
                },
                ManifestEntry {
                    sequence_id: "b".into(),
                    file: "b.pmt".into(),
                    num_frames: 2,
                    split: Split::Test,
                },
            ],
            root: PathBuf::new(),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = manifest();
        m.sequences[1].sequence_id = "a".into();
        assert!(matches!(m.validate(false), Err(Error::Manifest(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = manifest();
        m.root = dir.path().into();
        let err = m.validate(true).unwrap_err();
        assert!(err.is_io(), "{err}");
    }

    #[test]
    fn json_schema_round_trip() {
        let m = manifest();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"split\":\"train\""));
        let back: DatasetManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
