//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape rebuilt on every forward pass. Parameters persist
//! in a [`ParamStore`] and are bound onto the tape with [`Graph::param`];
//! after [`Graph::backward`] their gradients are pulled back into the store
//! with [`Graph::accumulate_param_grads`] and applied by [`sgd_step`].
//!
//! [`Graph::grad_reverse`] is the domain-adversarial reversal node: the
//! identity going forward, `-φ × upstream` coming back.

use alloc::string::String;
use alloc::vec::Vec;

pub mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use params::{sgd_step, Adam, Param, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("data length {len} does not fit shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("index {index} out of range for length {len} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("gradient reversal scale must be nonnegative, got {0}")]
    NegativeScale(f64),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter {0} missing from source store")]
    MissingParam(String),
}
