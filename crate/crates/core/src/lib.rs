//! Salience-aware dual-perturbation attacks and defenses on small image
//! classifiers.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] and [`tape`]: dense `f32` tensors and tape-based reverse-mode
//!   differentiation.
//! - [`model`]: a small sequential CNN, Adam, and parameter files.
//! - [`salience`]: a differentiable salience density, the foreground score,
//!   and foreground/background masks.
//! - [`attack`]: projections, PGD, the dual-perturbation attack and its
//!   randomized-smoothing variant, and a greedy sparse attack.
//! - [`defense`]: clean, adversarial, and noise-augmented training, plus
//!   smoothed prediction with abstention.
//! - [`data`]: the synthetic shape dataset and the DPT tensor container.
//! - [`eval`]: experiment drivers, CSV/PGM/PPM output, and the CLI.

pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod eval;
pub mod kv;
pub mod model;
pub mod salience;
pub mod tape;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use tape::{GradientSet, Tape, Var};
pub use tensor::Tensor;
