//! Diffusion-based stochastic human motion prediction.
//!
//! A single generator directly predicts clean future motion from a noised
//! future and the observed history: a transformer produces an initial
//! reconstruction, then a multi-stage graph-convolution network refines the
//! whole trajectory in DCT space. Sampling repeatedly predicts the clean
//! future and re-diffuses it one step less.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod checkpoint;
mod container;
pub mod data;
pub mod dct;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod plot;
pub mod sampling;
pub mod schedule;
pub mod tensor;
pub mod training;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use tensor::Tensor;
