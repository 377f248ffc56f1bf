//! Degrade every configured clip at every QP level and write the index.

use std::fs;
use std::path::{Path, PathBuf};

use crate::clip::ClipTensor;
use crate::config::RunConfig;
use crate::error::{DiqpError, Result};
use crate::pipeline::external::ExternalCodec;
use crate::pipeline::index::{DatasetIndex, IndexEntry, Split, INDEX_VERSION};
use crate::pipeline::manifest::{frame_name, write_frame_dir, ClipManifest};
use crate::pipeline::qp::Codec;
use crate::pipeline::quantizer::SyntheticQuantizer;
use crate::pipeline::segment::segment_clip;

const DONE_MARKER: &str = ".complete";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepareReport {
    pub index_path: PathBuf,
    pub entries: usize,
    /// (clip, QP) pairs degraded in this run.
    pub encoded: usize,
    /// (clip, QP) pairs found complete on disk and skipped.
    pub reused: usize,
}

pub fn degraded_dir(data_dir: &Path, clip: &str, codec: Codec, qp: u32) -> PathBuf {
    data_dir.join("degraded").join(clip).join(format!("{codec}_qp{qp:03}"))
}

fn is_complete(dir: &Path, frames: usize) -> bool {
    dir.join(DONE_MARKER).is_file() && (0..frames).all(|t| dir.join(frame_name(t)).is_file())
}

/// Degrade `clip` with the configured codec.
pub fn degrade_clip(cfg: &RunConfig, clip: &ClipTensor, qp: u32, fps: f64) -> Result<ClipTensor> {
    match cfg.codec_command() {
        None => SyntheticQuantizer::new(cfg.pipeline.synthetic_strength).degrade(clip, qp),
        Some(cmd) => ExternalCodec::from_config(cmd).round_trip(clip, qp, fps),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<PrepareReport> {
    cfg.validate()?;
    let manifests: Vec<(&PathBuf, Split)> = cfg
        .pipeline
        .train_manifests
        .iter()
        .map(|p| (p, Split::Train))
        .chain(cfg.pipeline.eval_manifests.iter().map(|p| (p, Split::Eval)))
        .collect();
    if manifests.is_empty() {
        return Err(DiqpError::Config("no clip manifests configured".into()));
    }
    let data_dir = &cfg.paths.data_dir;
    let codec = cfg.pipeline.codec;
    let qps = cfg.qp_levels()?;
    let mut index = DatasetIndex {
        version: INDEX_VERSION,
        entries: Vec::new(),
    };
    let (mut encoded, mut reused) = (0, 0);
    for (path, split) in manifests {
        let manifest = ClipManifest::load(path)?;
        let total = manifest.frames.len();
        let segments = segment_clip(total)?;
        let mut raw: Option<ClipTensor> = None;
        for &qp in &qps {
            let dir = degraded_dir(data_dir, &manifest.clip_id, codec, qp);
            if is_complete(&dir, total) {
                reused += 1;
            } else {
                if raw.is_none() {
                    raw = Some(manifest.load_clip(path)?);
                }
                let degraded = degrade_clip(cfg, raw.as_ref().expect("loaded"), qp, manifest.fps)?;
                write_frame_dir(&dir, &degraded)?;
                let marker = dir.join(DONE_MARKER);
                fs::write(&marker, b"").map_err(|e| DiqpError::io(&marker, e))?;
                encoded += 1;
            }
            for s in &segments {
                index.entries.push(IndexEntry {
                    clip: manifest.clip_id.clone(),
                    segment: s.index,
                    qp,
                    codec,
                    frames: s.frames,
                    middle: s.middle(),
                    total_frames: total,
                    raw_manifest: path.clone(),
                    degraded_dir: dir.clone(),
                    split,
                });
            }
        }
    }
    fs::create_dir_all(data_dir).map_err(|e| DiqpError::io(data_dir, e))?;
    let index_path = DatasetIndex::path(data_dir);
    index.save(&index_path)?;
    Ok(PrepareReport {
        index_path,
        entries: index.entries.len(),
        encoded,
        reused,
    })
}
