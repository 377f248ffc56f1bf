//! Minimal channels-last tensor engine with reverse-mode differentiation.
//!
//! Values are `f64`. Forward ops record onto a [`Tape`]; [`Tape::backward`]
//! sweeps it once in reverse. Only the operations a windowed transformer
//! U-Net needs are provided: dense and depthwise 3D convolution, linear
//! layers, batched matmul, softmax, layer norm, activations, concatenation
//! and index gathers (which express window partitioning, head splitting,
//! resampling and broadcasting).

pub mod activation;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod tape;
pub mod tensor;
pub mod window;

pub use activation::Activation;
pub use conv::Conv3dSpec;
pub use error::{Result, TensorError};
pub use tape::{grad, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use window::{window_merge, window_partition, HeadLayout};
