//! Training library for comparing credit-assignment rules on small networks.
//!
//! The crate implements plain back-propagation, feedback alignment (fixed
//! random feedback in place of transposed weights), direct feedback alignment
//! (per-layer error projected straight from the output error), the hybrid
//! scheme that keeps back-propagation in convolutional layers while the
//! fully-connected tail uses direct feedback, and the binarized variant that
//! stores feedback matrices as packed sign bits.
//!
//! Everything runs on the CPU with a fixed reduction order, so a given
//! (seed, config, data) triple reproduces bit-identical checkpoints and
//! metrics regardless of worker-thread count.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod feedback;
pub mod layers;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
pub use tensor::Tensor;
