//! Clip manifests: a JSON file listing a clip's frame images.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clip::ClipTensor;
use crate::error::{DiqpError, Result};
use crate::imageio::{read_rgb, write_rgb};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipManifest {
    pub clip_id: String,
    /// Frame paths relative to the manifest's directory.
    pub frames: Vec<String>,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:05}.png")
}

impl ClipManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DiqpError::io(path, e))?;
        let m: ClipManifest = serde_json::from_str(&text).map_err(|e| DiqpError::format(path, e.to_string()))?;
        if m.frames.is_empty() || m.width == 0 || m.height == 0 {
            return Err(DiqpError::format(path, "manifest lists no frames or has a zero dimension"));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| DiqpError::io(path, e))
    }

    pub fn frame_paths(&self, manifest_path: &Path) -> Vec<PathBuf> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        self.frames.iter().map(|f| base.join(f)).collect()
    }

    /// Read every frame, checking it against the declared size.
    pub fn load_clip(&self, manifest_path: &Path) -> Result<ClipTensor> {
        let frames = self
            .frame_paths(manifest_path)
            .iter()
            .map(|p| {
                let f = read_rgb(p)?;
                if f.shape()[..2] != [self.height, self.width] {
                    return Err(DiqpError::format(
                        p,
                        format!("frame is {}x{}, manifest says {}x{}", f.shape()[0], f.shape()[1], self.height, self.width),
                    ));
                }
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        ClipTensor::from_frames(&frames)
    }

    /// Write `clip` as numbered PNGs plus `manifest.json` into `dir`.
    pub fn write_clip(dir: &Path, clip_id: &str, clip: &ClipTensor, fps: f64) -> Result<(PathBuf, Self)> {
        fs::create_dir_all(dir).map_err(|e| DiqpError::io(dir, e))?;
        let mut frames = Vec::with_capacity(clip.frames());
        for t in 0..clip.frames() {
            let name = frame_name(t);
            write_rgb(&dir.join(&name), &clip.frame(t))?;
            frames.push(name);
        }
        let manifest = Self {
            clip_id: clip_id.to_string(),
            frames,
            width: clip.width(),
            height: clip.height(),
            fps,
        };
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok((path, manifest))
    }
}

/// Read numbered frames `frame_00000.png ..` from a directory.
pub fn read_frame_dir(dir: &Path, count: usize) -> Result<ClipTensor> {
    let frames = (0..count)
        .map(|t| read_rgb(&dir.join(frame_name(t))))
        .collect::<Result<Vec<_>>>()?;
    ClipTensor::from_frames(&frames)
}

pub fn write_frame_dir(dir: &Path, clip: &ClipTensor) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DiqpError::io(dir, e))?;
    for t in 0..clip.frames() {
        write_rgb(&dir.join(frame_name(t)), &clip.frame(t))?;
    }
    Ok(())
}
