//! Reverse-mode automatic differentiation over dense 1-D/2-D `f64` arrays.
//!
//! Everything trainable in this crate differentiates through this engine:
//! a tape ([`Graph`]) records eagerly-evaluated operations, and
//! [`Graph::backward`] replays the tape in reverse to accumulate gradients
//! for trainable leaves. Unrolled ODE integration steps are ordinary tape
//! nodes, so gradients through integration are exact for the chosen
//! discretization.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamParams, AdamState};
pub use gradcheck::{finite_difference_gradients, GradCheck, GradCheckReport};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction, graph ops and the optimizer.
#[derive(Debug, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: left is {lhs:?}, right is {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { len: usize, shape: (usize, usize) },
    #[error("non-finite value {value} at index {index} in {context}")]
    NonFinite {
        context: &'static str,
        index: usize,
        value: f64,
    },
    #[error("loss node must be a 1x1 scalar, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("node {id} is detached: no gradient is tracked for it")]
    Detached { id: usize },
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },
}

impl DiffError {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        DiffError::Invalid {
            what,
            why: why.into(),
        }
    }
}
