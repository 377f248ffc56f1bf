//! Run configuration: model geometry, optimizer, data pipeline and paths.
//!
//! Loaded from TOML. Unknown keys are rejected and every section is
//! validated before any work starts.

use std::path::{Path, PathBuf};

use diqp_tensor::Activation;
use serde::{Deserialize, Serialize};

use crate::error::{DiqpError, Result};
use crate::pipeline::Codec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Gelu,
    Silu,
    LeakyRelu,
}

/// How auxiliary context levels join the U-Net features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    Concat,
    Add,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LookAroundConfig {
    pub enabled: bool,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub temporal_kernel: usize,
}

impl Default for LookAroundConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            channels: vec![8, 16, 32],
            kernel: 3,
            temporal_kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LookAheadConfig {
    pub enabled: bool,
    /// Temporal offset T to the future frame.
    pub offset: usize,
    pub channels: Vec<usize>,
}

impl Default for LookAheadConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            offset: 50,
            channels: vec![8, 16, 32],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LostConfig {
    /// Original frame size `[H, W]`; crop-point vocabularies derive from it.
    pub frame_size: [usize; 2],
    /// Frame-index vocabulary.
    pub max_frames: usize,
    /// QP vocabulary is `0..=qp_max`.
    pub qp_max: u32,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Side `l` of the square the mixing network output is reshaped to.
    pub base_side: usize,
}

impl Default for LostConfig {
    fn default() -> Self {
        Self {
            frame_size: [64, 64],
            max_frames: 300,
            qp_max: 255,
            embed_dim: 8,
            hidden: 32,
            base_side: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder/decoder stage count K.
    pub stages: usize,
    pub base_channels: usize,
    pub channel_mult: usize,
    /// Attention heads per stage; the bottleneck reuses the last entry.
    pub heads: Vec<usize>,
    /// Attention window `(wt, wh, ww)`, clamped to each stage's extent.
    pub window: [usize; 3],
    pub blocks_per_stage: usize,
    pub input_kernel: usize,
    pub leff_ratio: usize,
    pub clip_len: usize,
    /// Side of the square training/inference window crop.
    pub window_side: usize,
    pub ffn_activation: ActivationKind,
    pub leaky_slope: f64,
    pub norm_eps: f64,
    pub injection: Injection,
    pub look_around: LookAroundConfig,
    pub look_ahead: LookAheadConfig,
    pub lost: LostConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stages: 3,
            base_channels: 16,
            channel_mult: 2,
            heads: vec![2, 4, 8],
            window: [3, 8, 8],
            blocks_per_stage: 2,
            input_kernel: 3,
            leff_ratio: 2,
            clip_len: 3,
            window_side: 32,
            ffn_activation: ActivationKind::Gelu,
            leaky_slope: 0.01,
            norm_eps: 1e-5,
            injection: Injection::Concat,
            look_around: LookAroundConfig::default(),
            look_ahead: LookAheadConfig::default(),
            lost: LostConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn channels(&self, stage: usize) -> usize {
        self.base_channels * self.channel_mult.pow(stage as u32)
    }

    /// Spatial side of encoder stage `stage`; `stage == stages` is the bottleneck.
    pub fn side(&self, stage: usize) -> usize {
        self.window_side >> stage
    }

    pub fn heads_at(&self, stage: usize) -> usize {
        self.heads[stage.min(self.stages - 1)]
    }

    pub fn window_at(&self, stage: usize) -> [usize; 3] {
        let side = self.side(stage);
        [
            self.window[0].min(self.clip_len),
            self.window[1].min(side),
            self.window[2].min(side),
        ]
    }

    pub fn activation(&self) -> Activation {
        match self.ffn_activation {
            ActivationKind::Gelu => Activation::Gelu,
            ActivationKind::Silu => Activation::Silu,
            ActivationKind::LeakyRelu => Activation::LeakyRelu(self.leaky_slope),
        }
    }

    pub fn conv_activation(&self) -> Activation {
        Activation::LeakyRelu(self.leaky_slope)
    }

    /// Spatial size of the downscaled full frames fed to the auxiliaries;
    /// equal to the window size so crop points scale by window/original.
    pub fn down_size(&self) -> [usize; 2] {
        [self.window_side, self.window_side]
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(DiqpError::Config(m));
        let k = self.stages;
        if k == 0 {
            return err("model.stages must be at least 1".into());
        }
        if self.heads.len() != k {
            return err(format!("model.heads has {} entries for {k} stages", self.heads.len()));
        }
        if self.clip_len != 3 {
            return err(format!("model.clip_len must be 3, got {}", self.clip_len));
        }
        if self.input_kernel % 2 == 0 {
            return err("model.input_kernel must be odd".into());
        }
        if self.base_channels == 0 || self.channel_mult == 0 || self.blocks_per_stage == 0 || self.leff_ratio == 0 {
            return err("model channel widths and block counts must be positive".into());
        }
        if self.window.contains(&0) {
            return err("model.window entries must be positive".into());
        }
        if self.window_side % (1 << k) != 0 || self.side(k) == 0 {
            return err(format!(
                "model.window_side {} must be divisible by 2^stages = {}",
                self.window_side,
                1 << k
            ));
        }
        for stage in 0..=k {
            let (c, h) = (self.channels(stage), self.heads_at(stage));
            if h == 0 || c % h != 0 {
                return err(format!("stage {stage}: {c} channels not divisible by {h} heads"));
            }
            let side = self.side(stage);
            let win = self.window_at(stage);
            if self.clip_len % win[0] != 0 || side % win[1] != 0 || side % win[2] != 0 {
                return err(format!("stage {stage}: window {win:?} does not divide ({}, {side}, {side})", self.clip_len));
            }
            if side % self.lost.base_side != 0 {
                return err(format!(
                    "stage {stage}: side {side} not a multiple of lost.base_side {}",
                    self.lost.base_side
                ));
            }
        }
        if self.look_around.enabled && self.look_around.channels.len() != k {
            return err(format!("look_around.channels needs {k} entries"));
        }
        if self.look_around.kernel % 2 == 0 || self.look_around.temporal_kernel % 2 == 0 {
            return err("look_around kernels must be odd".into());
        }
        if self.look_ahead.enabled {
            if self.look_ahead.channels.len() != k {
                return err(format!("look_ahead.channels needs {k} entries"));
            }
            if self.look_ahead.offset == 0 {
                return err("look_ahead.offset must be at least 1".into());
            }
        }
        if self.injection == Injection::Add {
            for i in 0..k {
                if self.look_around.enabled && self.look_around.channels[i] != self.channels(i) {
                    return err(format!("additive injection needs look_around.channels[{i}] == {}", self.channels(i)));
                }
                if self.look_ahead.enabled && self.look_ahead.channels[i] != self.channels(i) {
                    return err(format!("additive injection needs look_ahead.channels[{i}] == {}", self.channels(i)));
                }
            }
        }
        let l = &self.lost;
        if l.base_side == 0 || l.embed_dim == 0 || l.hidden == 0 || l.max_frames == 0 {
            return err("lost widths must be positive".into());
        }
        if l.frame_size[0] < self.window_side || l.frame_size[1] < self.window_side {
            return err(format!(
                "lost.frame_size {:?} is smaller than the window side {}",
                l.frame_size, self.window_side
            ));
        }
        if !(self.leaky_slope.is_finite() && self.norm_eps >= 0.0) {
            return err("model.leaky_slope / norm_eps invalid".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub schedule: LrSchedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.02,
            base_lr: 3e-4,
            warmup_fraction: 0.03,
            schedule: LrSchedule::Constant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    PerElementMean,
    GlobalNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub epsilon: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            reduction: Reduction::PerElementMean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Write an intermediate checkpoint every N steps; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Full-scale epoch counts, kept for reference; runs are step-driven.
    pub epochs_av1: usize,
    pub epochs_hevc: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 1,
            checkpoint_every: 0,
            epochs_av1: 40,
            epochs_hevc: 200,
        }
    }
}

/// Subprocess templates for one external codec. `{input}`, `{output}`,
/// `{qp}` and `{fps}` are substituted in every argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecCommand {
    pub program: String,
    pub container: String,
    pub encode: Vec<String>,
    pub decode: Vec<String>,
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl CodecCommand {
    pub fn hevc_default() -> Self {
        Self {
            program: "ffmpeg".into(),
            container: "mkv".into(),
            encode: args(&[
                "-y", "-loglevel", "error", "-framerate", "{fps}", "-i", "{input}", "-c:v", "libx265",
                "-x265-params", "qp={qp}", "-pix_fmt", "yuv420p", "{output}",
            ]),
            decode: args(&["-y", "-loglevel", "error", "-i", "{input}", "{output}"]),
        }
    }

    pub fn av1_default() -> Self {
        Self {
            program: "ffmpeg".into(),
            container: "mkv".into(),
            encode: args(&[
                "-y", "-loglevel", "error", "-framerate", "{fps}", "-i", "{input}", "-c:v", "librav1e", "-qp",
                "{qp}", "-pix_fmt", "yuv420p", "{output}",
            ]),
            decode: args(&["-y", "-loglevel", "error", "-i", "{input}", "{output}"]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub codec: Codec,
    /// Subset of the codec's QP schedule to use; empty means all levels.
    pub qp_levels: Vec<u32>,
    pub synthetic_qp_max: u32,
    /// Quantizer step per QP unit, in 8-bit code values.
    pub synthetic_strength: f64,
    pub train_manifests: Vec<PathBuf>,
    pub eval_manifests: Vec<PathBuf>,
    pub hevc: CodecCommand,
    pub av1: CodecCommand,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            codec: Codec::Synthetic,
            qp_levels: Vec::new(),
            synthetic_qp_max: 51,
            synthetic_strength: 1.0,
            train_manifests: Vec::new(),
            eval_manifests: Vec::new(),
            hevc: CodecCommand::hevc_default(),
            av1: CodecCommand::av1_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestoreConfig {
    /// Extra restoration passes, each re-conditioned `ladder_qp_step` lower.
    pub ladder_steps: usize,
    pub ladder_qp_step: u32,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        Self {
            ladder_steps: 0,
            ladder_qp_step: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Absolute difference (in [0, 1] units) rendered as white.
    pub heatmap_scale: f64,
    pub knee_fraction: f64,
    pub knee_run: usize,
    pub max_offset: usize,
    pub anchors: Vec<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            heatmap_scale: 0.25,
            knee_fraction: 0.05,
            knee_run: 3,
            max_offset: 60,
            anchors: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            out_dir: "runs".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub restore: RestoreConfig,
    pub analysis: AnalysisConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| DiqpError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DiqpError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Make relative paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.data_dir);
        fix(&mut self.paths.out_dir);
        self.pipeline.train_manifests.iter_mut().for_each(fix);
        self.pipeline.eval_manifests.iter_mut().for_each(fix);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let o = &self.optimizer;
        let err = |m: &str| Err(DiqpError::Config(m.into()));
        if !(0.0 < o.beta1 && o.beta1 < 1.0 && 0.0 < o.beta2 && o.beta2 < 1.0) {
            return err("optimizer betas must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&o.warmup_fraction) {
            return err("optimizer.warmup_fraction must lie in [0, 1)");
        }
        if o.base_lr < 0.0 || o.weight_decay < 0.0 || o.eps <= 0.0 {
            return err("optimizer rates must be non-negative and eps positive");
        }
        if self.loss.epsilon <= 0.0 {
            return err("loss.epsilon must be positive");
        }
        if self.train.batch_size == 0 {
            return err("train.batch_size must be positive");
        }
        if self.pipeline.synthetic_strength < 0.0 {
            return err("pipeline.synthetic_strength must be non-negative");
        }
        let schedule = crate::pipeline::enumerate_qp_levels(self.pipeline.codec, self.pipeline.synthetic_qp_max)?;
        for qp in &self.pipeline.qp_levels {
            if !schedule.contains(qp) {
                return Err(DiqpError::Config(format!(
                    "pipeline.qp_levels: {qp} is not in the {} schedule",
                    self.pipeline.codec
                )));
            }
        }
        if schedule.iter().any(|&q| q > self.model.lost.qp_max) {
            return err("model.lost.qp_max is smaller than the codec's largest QP");
        }
        if self.analysis.heatmap_scale <= 0.0 || self.analysis.knee_run == 0 {
            return err("analysis.heatmap_scale and knee_run must be positive");
        }
        Ok(())
    }

    /// The QP levels this run uses.
    pub fn qp_levels(&self) -> Result<Vec<u32>> {
        if self.pipeline.qp_levels.is_empty() {
            crate::pipeline::enumerate_qp_levels(self.pipeline.codec, self.pipeline.synthetic_qp_max)
        } else {
            Ok(self.pipeline.qp_levels.clone())
        }
    }

    pub fn codec_command(&self) -> Option<&CodecCommand> {
        match self.pipeline.codec {
            Codec::Hevc => Some(&self.pipeline.hevc),
            Codec::Av1 => Some(&self.pipeline.av1),
            Codec::Synthetic => None,
        }
    }
}
