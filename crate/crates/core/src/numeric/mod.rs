//! Differentiable tensor computation: a static op graph, its reverse-mode
//! sweep, Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;
mod kernels;
mod reference;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{
    compare_gradients, grad_check, numeric_gradients, relative_error, GradCheckConfig,
    GradCheckReport, ParamCheck, KINK_RETRIES,
};
pub use graph::{Evaluation, Gradients, Graph, Inputs, NodeId, Op, ParamId, ParamStore};
pub use reference::{reference_eval, reference_loss, WideParams};
pub use tensor::{conv_output_extent, conv_transpose_output_extent, Tensor};

/// Leaky rectifier slope used throughout the translation networks.
pub const LEAKY_SLOPE: f32 = 0.2;
/// Instance normalization epsilon.
pub const NORM_EPS: f32 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape mismatch at {node}: expected {expected}, got {actual:?}")]
    ShapeMismatch {
        node: String,
        expected: String,
        actual: Vec<usize>,
    },
    #[error("graph input `{0}` is not bound")]
    MissingInput(String),
    #[error("parameter #{0} is not in the store")]
    UnknownParam(usize),
    #[error("loss node {node} is not scalar (shape {shape:?})")]
    NonScalarLoss { node: String, shape: Vec<usize> },
    #[error("optimizer state: {0}")]
    Optimizer(String),
}
