//! QP-conditioned noise-prediction restoration of codec-compressed video.
//!
//! A degraded 3-frame window is restored as `F_res = F_iqp + noise'`, where
//! `noise'` comes from a window-attention U-Net conditioned on the codec QP
//! and the window's location, with global context from downscaled frames
//! and future-frame context from a fixed temporal offset.

pub mod analysis;
pub mod checkpoint;
pub mod clip;
pub mod config;
pub mod error;
pub mod imageio;
pub mod look_ahead;
pub mod look_around;
pub mod lost;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod train;
pub mod unet;

pub use clip::ClipTensor;
pub use config::{ModelConfig, RunConfig};
pub use error::{DiqpError, Result};
pub use lost::ConditionalInfo;
pub use model::{DiqpModel, ModelInput};
