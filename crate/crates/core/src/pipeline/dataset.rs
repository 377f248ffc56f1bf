//! In-memory training/eval data and assembly of model inputs.

use std::collections::BTreeMap;
use std::sync::Arc;

use diqp_tensor::Tensor;
use rand::Rng;

use crate::clip::ClipTensor;
use crate::config::ModelConfig;
use crate::error::{DiqpError, Result};
use crate::look_ahead::{compute_wdf, select_future_index, LookAheadInput, WindowCrop};
use crate::look_around::downsample_clip;
use crate::model::ModelInput;
use crate::pipeline::index::{DatasetIndex, Split};
use crate::pipeline::manifest::{read_frame_dir, ClipManifest};
use crate::pipeline::segment::{segment_clip, ClipSegment};
use crate::pipeline::window::{sample_crop, WindowSample};

/// One clip at one QP, with its degraded frames pre-downscaled.
#[derive(Clone, Debug)]
pub struct ClipData {
    pub clip: String,
    pub qp: u32,
    pub raw: Arc<ClipTensor>,
    pub degraded: ClipTensor,
    pub downscaled: ClipTensor,
}

impl ClipData {
    pub fn new(clip: &str, qp: u32, raw: Arc<ClipTensor>, degraded: ClipTensor, cfg: &ModelConfig) -> Result<Self> {
        if raw.tensor().shape() != degraded.tensor().shape() {
            return Err(DiqpError::Invalid(format!(
                "clip {clip} qp {qp}: raw {:?} and degraded {:?} differ",
                raw.tensor().shape(),
                degraded.tensor().shape()
            )));
        }
        let downscaled = downsample_clip(&degraded, cfg.down_size())?;
        Ok(Self {
            clip: clip.to_string(),
            qp,
            raw,
            degraded,
            downscaled,
        })
    }

    pub fn total_frames(&self) -> usize {
        self.degraded.frames()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub input: ModelInput,
    pub sample: WindowSample,
}

impl TrainExample {
    /// Raw window `F_raw o M` restricted to the window, `[3, side, side, 3]`.
    pub fn target(&self) -> &Tensor {
        self.sample.raw.tensor()
    }
}

fn window(frame: &Tensor, crop: [usize; 2], side: usize) -> Result<Tensor> {
    let clip = ClipTensor::new(frame.clone().reshape(&[1, frame.shape()[0], frame.shape()[1], frame.shape()[2]])?)?;
    Ok(clip.crop(crop[0], crop[1], [side, side])?.frame(0))
}

/// Model input for the window at `crop` over the 3-frame `segment`.
pub fn assemble_input(
    degraded: &ClipTensor,
    downscaled: &ClipTensor,
    segment: [usize; 3],
    crop: [usize; 2],
    qp: u32,
    cfg: &ModelConfig,
) -> Result<ModelInput> {
    let side = cfg.window_side;
    let total = degraded.frames();
    let frames = degraded.select(&segment)?;
    let clip = frames.crop(crop[0], crop[1], [side, side])?.into_tensor();
    let dims = [degraded.height(), degraded.width()];
    let info = crate::lost::ConditionalInfo::new(qp, segment[1], crop, dims, cfg.down_size())?;
    let look_ahead = if cfg.look_ahead.enabled {
        let n = segment[2];
        let future = select_future_index(n, cfg.look_ahead.offset, total);
        Some(LookAheadInput {
            group1: downscaled.select(&[n, future])?.into_tensor(),
            current: WindowCrop {
                crop,
                frame: window(&degraded.frame(n), crop, side)?,
            },
            future: WindowCrop {
                crop,
                frame: window(&degraded.frame(future), crop, side)?,
            },
            wdf: compute_wdf(total, segment[1])?,
        })
    } else {
        None
    };
    Ok(ModelInput {
        clip,
        info,
        downscaled: downscaled.select(&segment)?.into_tensor(),
        look_ahead,
    })
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub clips: Vec<ClipData>,
    /// `(clip index, segment)` pairs.
    pub entries: Vec<(usize, ClipSegment)>,
}

impl Dataset {
    pub fn from_clips(clips: Vec<ClipData>) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, c) in clips.iter().enumerate() {
            for s in segment_clip(c.total_frames())? {
                entries.push((i, s));
            }
        }
        Ok(Self { clips, entries })
    }

    /// Load every (clip, QP) of one split named in the index.
    pub fn load(index: &DatasetIndex, split: Split, cfg: &ModelConfig) -> Result<Self> {
        let mut raws: BTreeMap<String, Arc<ClipTensor>> = BTreeMap::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut clips = Vec::new();
        for e in index.split(split) {
            if !seen.insert((e.clip.clone(), e.qp)) {
                continue;
            }
            let raw = match raws.get(&e.clip) {
                Some(r) => r.clone(),
                None => {
                    let m = ClipManifest::load(&e.raw_manifest)?;
                    let r = Arc::new(m.load_clip(&e.raw_manifest)?);
                    raws.insert(e.clip.clone(), r.clone());
                    r
                }
            };
            let degraded = read_frame_dir(&e.degraded_dir, e.total_frames)?;
            clips.push(ClipData::new(&e.clip, e.qp, raw, degraded, cfg)?);
        }
        Self::from_clips(clips)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn example(&self, entry: usize, crop: [usize; 2], cfg: &ModelConfig) -> Result<TrainExample> {
        let (ci, seg) = self.entries[entry];
        let c = &self.clips[ci];
        let input = assemble_input(&c.degraded, &c.downscaled, seg.frames, crop, c.qp, cfg)?;
        let raw = c.raw.select(&seg.frames)?;
        let degraded = c.degraded.select(&seg.frames)?;
        let sample = WindowSample::extract(&raw, &degraded, crop, cfg.window_side, c.qp, seg.middle(), cfg.down_size())?;
        Ok(TrainExample { input, sample })
    }

    /// A uniformly chosen entry and window position.
    pub fn sample(&self, rng: &mut impl Rng, cfg: &ModelConfig) -> Result<TrainExample> {
        if self.is_empty() {
            return Err(DiqpError::Invalid("dataset is empty".into()));
        }
        let entry = rng.random_range(0..self.len());
        let c = &self.clips[self.entries[entry].0];
        let crop = sample_crop([c.degraded.height(), c.degraded.width()], cfg.window_side, rng)?;
        self.example(entry, crop, cfg)
    }
}
