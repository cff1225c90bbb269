//! Differentiable tensor compute: kernels, reverse-mode autodiff and Adam.

pub mod adam;
pub mod graph;
pub mod init;
pub mod kernels;
pub mod tensor;

pub use adam::{Adam, AdamConfig, AdamMoments, Update};
pub use graph::{BatchStats, CustomOp, Gradients, Graph, Var};
pub use tensor::Tensor;

/// Negative-side slope of every leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
