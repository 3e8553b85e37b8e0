//! Cross-system fluorescence image enhancement.
//!
//! Pairs low-quality wide-field images with high-quality confocal images of
//! the same field, trains a residual U-Net generator against a CNN
//! discriminator with a relativistic loss, and evaluates the result against
//! a Richardson-Lucy deconvolution baseline.

pub mod dataset;
pub mod error;
mod fourier;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod psf;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
