use serde::{Deserialize, Serialize};

use crate::error::{DiqpError, Result};

/// Three consecutive frames of a clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSegment {
    pub index: usize,
    pub frames: [usize; 3],
}

impl ClipSegment {
    pub fn middle(&self) -> usize {
        self.frames[1]
    }

    pub fn last(&self) -> usize {
        self.frames[2]
    }
}

/// Non-overlapping 3-frame segments; trailing frames are dropped.
pub fn segment_clip(frame_count: usize) -> Result<Vec<ClipSegment>> {
    if frame_count < 3 {
        return Err(DiqpError::Invalid(format!(
            "a clip needs at least 3 frames to segment, got {frame_count}"
        )));
    }
    Ok((0..frame_count / 3)
        .map(|i| ClipSegment {
            index: i,
            frames: [3 * i, 3 * i + 1, 3 * i + 2],
        })
        .collect())
}
