//! Toy-scale study of gradient-sign attacks on monocular depth estimation
//! and of the saliency-masking defense.
//!
//! The crate provides a small reverse-mode autodiff engine, encoder-decoder
//! depth and saliency networks, the attack/defense loops built on them, a
//! synthetic scene generator with analytic ground-truth depth, and the
//! evaluation metric suite. Everything is CPU-only, deterministic per seed,
//! and sized so the full experiment pipeline runs in minutes.

pub mod data;
pub mod attacks;
pub mod defense;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod optim;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::{Tape, Tensor, Var};
