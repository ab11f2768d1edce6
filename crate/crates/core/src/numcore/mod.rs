//! Dense `f64` arrays, a reverse-mode tape, and a finite-difference checker.

mod array;
mod gradcheck;
mod graph;
mod params;

pub use array::RealArray;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{conv_output_len, gelu_value, GeluMode, Gradients, Graph, Var};
pub use params::{Param, ParamId, ParamStore, Session};

pub(crate) use graph::{logsumexp, softmax_in_place};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("evaluation failed at perturbed point (input {input}, element {element}): {reason}")]
    Evaluation {
        input: usize,
        element: usize,
        reason: String,
    },
}
