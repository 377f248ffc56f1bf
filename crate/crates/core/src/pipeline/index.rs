//! The dataset index: one entry per (clip, segment, QP).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DiqpError, Result};
use crate::pipeline::qp::Codec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub clip: String,
    pub segment: usize,
    pub qp: u32,
    pub codec: Codec,
    pub frames: [usize; 3],
    pub middle: usize,
    pub total_frames: usize,
    pub raw_manifest: PathBuf,
    /// Directory holding every degraded frame of the clip at this QP.
    pub degraded_dir: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub version: u32,
    pub entries: Vec<IndexEntry>,
}

pub const INDEX_VERSION: u32 = 1;

impl DatasetIndex {
    pub fn path(data_dir: &Path) -> PathBuf {
        data_dir.join("index.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DiqpError::io(path, e))?;
        let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| DiqpError::format(path, e.to_string()))?;
        if index.version != INDEX_VERSION {
            return Err(DiqpError::format(path, format!("unsupported index version {}", index.version)));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("index serializes");
        fs::write(path, text + "\n").map_err(|e| DiqpError::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}
