//! Two-stage representation learning over heterogeneous multi-subject
//! recordings.
//!
//! Stage one trains per-subject convolutional autoencoders against
//! vector-quantization codebooks: one EMA-updated codebook shared by every
//! subject plus one gradient-trained private codebook per subject. Latent
//! tokens are routed between the two books by ranking their distance to the
//! shared book (`h2d`). Stage two freezes everything learned in stage one and
//! trains a small transformer classifier on the quantized token sequences
//! (`pipeline`). A seeded synthetic generator (`synth`) plants recoverable
//! shared and subject-specific structure so every claim is testable without
//! real recordings.
//!
//! All math runs in f64 on a define-by-run reverse-mode tape (`graph`); runs
//! are bit-reproducible from a single seed.

pub mod checkpoint;
pub mod codebook;
pub mod config;
pub mod error;
pub mod fd;
pub mod graph;
pub mod h2d;
pub mod metrics;
pub mod networks;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{CoreError, Result};
pub use tensor::Tensor;
