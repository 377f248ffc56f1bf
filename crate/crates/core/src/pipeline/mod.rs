//! Data preparation: QP schedules, codec round-trips, clip segmentation,
//! window sampling and the on-disk dataset index.

pub mod dataset;
pub mod external;
pub mod index;
pub mod manifest;
pub mod prepare;
pub mod qp;
pub mod quantizer;
pub mod segment;
pub mod window;

pub use dataset::{assemble_input, Dataset, TrainExample};
pub use external::ExternalCodec;
pub use index::{DatasetIndex, IndexEntry, Split};
pub use manifest::ClipManifest;
pub use prepare::{prepare, PrepareReport};
pub use qp::{enumerate_qp_levels, Codec};
pub use quantizer::SyntheticQuantizer;
pub use segment::{segment_clip, ClipSegment};
pub use window::{sample_crop, sample_window, Mask, WindowSample};
