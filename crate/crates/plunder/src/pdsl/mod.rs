//! Probabilistic policy DSL: abstract syntax, parser and printer, exact
//! probability semantics, sampling semantics, and a physical-dimension type
//! system used by the synthesizer to prune ill-typed candidates.
//!
//! A policy is an ordered list of guarded transition rules
//! `if (guard and a == A) then A'` over a fixed action set. Guards are
//! boolean combinations of independent probabilistic coin flips `flp(ψ)`,
//! where ψ is a constant or a logistic threshold `lgs(f, x0, k)` over a
//! state feature `f`.

pub mod ast;
pub mod dim;
pub mod error;
pub mod eval;
pub mod parse;
pub mod print;
pub mod sig;

pub use ast::{ast_size, Feature, Guard, Policy, ProbExpr, TransitionRule};
pub use dim::Dimension;
pub use error::PdslError;
pub use eval::{
    check_dimensions, eval_feature, guard_probability, prob_expr_value, sample_next_action,
    sigmoid, transition_distribution,
};
pub use parse::parse_policy;
pub use print::{format_number, serialize_policy};
pub use sig::{ActionLabel, ActionSet, FuncDef, FunctionRegistry, Signature, State};
