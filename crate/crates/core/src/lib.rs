//! Flow-field degradation and self-conditioned progressive super-resolution
//! for face images, built on a small reverse-mode differentiation engine.
//!
//! The pipeline has two trainable stages:
//!
//! 1. [`degradation`] learns to turn clean, bicubic-downsampled LR faces
//!    into realistic noisy ones by predicting an intermediate image plus a
//!    per-pixel flow field that warps it.
//! 2. [`srnet`] upsamples LR faces progressively (x2 per level), modulating
//!    normalized activations with a factor computed from the LR input.
//!
//! [`trainer`] drives both stages, [`metrics`] scores results on the luma
//! channel and [`data`] handles corpora and batching.

pub mod autodiff;
pub mod data;
pub mod degradation;
pub mod error;
pub mod imageops;
pub mod losses;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod srnet;
pub mod tensor;
pub mod trainer;

pub use autodiff::{Tape, Var};
pub use error::{CheckpointError, Error, ErrorKind, Result};
pub use losses::LossWeights;
pub use params::{Binder, GradMap, ParamStore};
pub use tensor::{Axes, DType, Scalar, Shape, Tensor};
