//! Learner-engagement analysis from facial expressions.
//!
//! A small convolutional network scores each face frame over seven basic
//! emotions; six-frame windows of those scores are mapped to complex
//! "state of mind" labels and aggregated into per-session reports.
//!
//! Layout:
//! - [`tensor`] and [`nn`]: dense tensors, layer kernels, the CNN and its backward pass.
//! - [`training`]: cross-entropy SGD training and classification metrics.
//! - [`pipeline`]: frame preprocessing and single-frame classification.
//! - [`mindstate`]: window buffering and rule-based state-of-mind detection.
//! - [`report`]: session aggregation, learner feedback agreement, report emission.
//! - [`io`]: datasets, PGM frames, stream manifests, binary model files.
//! - [`cli`]: the `engage` command-line front end.

pub mod cli;
pub mod emotion;
pub mod error;
pub mod io;
pub mod mindstate;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use emotion::{Emotion, EmotionScores};
pub use error::{Error, Result};
pub use nn::{Gradients, LayerSpec, Model};
pub use tensor::{Scalar, Tensor};
