//! Attentive max feature map networks for acoustic scene classification.
//!
//! A from-first-principles implementation of the AMFM block (max feature map
//! plus convolutional block attention in elementwise competition) and joint
//! 10-class/3-class multi-task training, built on a dense `f64` tensor core
//! whose every backward pass is verified against central finite differences.
//!
//! The crate splits into:
//!
//! - [`tensor`] / [`nn`]: the value types and differentiable layer primitives;
//! - [`gradcheck`]: the finite-difference verification harness;
//! - [`attention`] / [`amfm`]: CBAM gates, MFM, AMFM, and the composite block;
//! - [`multitask`]: the scene taxonomy, head topologies, loss weighting,
//!   GradNorm and score fusion;
//! - [`model`]: trunk + head assembly with explicit forward/backward wiring;
//! - [`frontend`]: WAV ingestion, STFT/mel features, mixup, SpecAugment, and
//!   the synthetic dataset;
//! - [`trainer`]: SGD with momentum and cosine warm restarts, the epoch loop,
//!   evaluation, checkpoints;
//! - [`cli`]: the `amfm` command-line entry point.
//!
//! The book under `book/` walks through the same material chapter by chapter;
//! its code snippets compile and run as part of `cargo test`.

pub mod amfm;
pub mod attention;
pub mod cli;
pub mod error;
pub mod export;
pub mod frontend;
pub mod gradcheck;
pub mod model;
pub mod multitask;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{CheckpointError, Error, Result};
pub use rng::SeededRng;
pub use tensor::{FeatureMap, Tensor};

// Book chapters double as doc-tests so the narrative snippets cannot rot.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tensors-and-layers.md")]
    pub struct TensorsAndLayers;
    #[doc = include_str!("../../../book/src/gradient-checking.md")]
    pub struct GradientChecking;
    #[doc = include_str!("../../../book/src/mfm-and-amfm.md")]
    pub struct MfmAndAmfm;
    #[doc = include_str!("../../../book/src/multitask.md")]
    pub struct Multitask;
    #[doc = include_str!("../../../book/src/frontend.md")]
    pub struct Frontend;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
}
