use thiserror::Error;

use super::dim::Dimension;

#[derive(Debug, Error)]
pub enum PdslError {
    #[error("unknown variable `{name}` in `{subtree}`")]
    UnknownVariable { name: String, subtree: String },

    #[error("unknown function `{name}` in `{subtree}`")]
    UnknownFunction { name: String, subtree: String },

    #[error("function `{name}` expects {expected} arguments, got {got} in `{subtree}`")]
    ArityMismatch { name: String, expected: usize, got: usize, subtree: String },

    #[error("dimension mismatch: `{left_dim}` vs `{right_dim}` in `{subtree}`")]
    DimensionMismatch { left_dim: Dimension, right_dim: Dimension, subtree: String },

    #[error("probability {value} outside [0, 1]")]
    ProbabilityRange { value: f64 },

    #[error("unknown action label `{name}`")]
    UnknownAction { name: String },

    #[error("duplicate action label `{name}`")]
    DuplicateAction { name: String },

    #[error("action set must be nonempty")]
    EmptyActionSet,

    #[error("state has {got} values but signature declares {expected} variables")]
    StateArity { got: usize, expected: usize },

    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
}
