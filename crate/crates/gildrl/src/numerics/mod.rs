//! Tensor arithmetic and the differentiation engine.
//!
//! Everything is 64-bit floating point. The engine supports one level
//! of differentiation through a gradient: enough for vector–mixed-
//! Jacobian products, never full Hessians.

mod params;
mod tape;
mod tensor;

#[cfg(test)]
mod tests;

pub use params::{
    diag_gaussian_log_density, grad, grad_of_grad_expression, grad_with_value, ParamVector,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    BadShape {
        op: &'static str,
        detail: String,
    },
    /// A documented operation produced NaN or Inf. Training steps
    /// abort on this instead of propagating the values.
    NonFinite {
        op: &'static str,
        index: usize,
    },
    NotScalar {
        op: &'static str,
        shape: Vec<usize>,
    },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: operand shapes {lhs:?} and {rhs:?} do not conform")
            }
            NumericsError::BadShape { op, detail } => write!(f, "{op}: {detail}"),
            NumericsError::NonFinite { op, index } => {
                write!(f, "{op}: non-finite value at flat index {index}")
            }
            NumericsError::NotScalar { op, shape } => {
                write!(f, "{op}: expected scalar output, got shape {shape:?}")
            }
        }
    }
}

impl std::error::Error for NumericsError {}
