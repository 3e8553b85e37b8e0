//! Numeric kernel layer: tensors, differentiable operations with explicit
//! backward passes, parameter-holding layers and a finite-difference
//! gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod tensor;

pub use gradcheck::{grad_check, grad_check_with, Differentiable, GradCheckOptions, GradCheckReport};
pub use layers::{Conv2d, Dense, Model, Parameter};
pub use ops::Padding;
pub use tensor::{Element, Shape, Tensor};

/// Leaky ReLU slope used by both networks.
pub const LRELU_SLOPE: f64 = 0.1;
