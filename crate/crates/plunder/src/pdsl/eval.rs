use rand::Rng;

use super::ast::{Feature, Guard, Policy, ProbExpr};
use super::dim::Dimension;
use super::error::PdslError;
use super::sig::{ActionLabel, Signature, State};

/// Probabilities from logistic thresholds stay inside the open unit
/// interval even when the exponent saturates in floating point.
const LOGISTIC_MIN: f64 = 1e-300;
const LOGISTIC_MAX: f64 = 1.0 - 1e-16;

/// Returns the unique physical dimension of a feature under the signature,
/// or rejects it. Sums and differences require equal operand dimensions;
/// function applications must match the registered argument dimensions.
pub fn check_dimensions(feature: &Feature, sig: &Signature) -> Result<Dimension, PdslError> {
    match feature {
        Feature::Var(name) => sig
            .var_dim(name)
            .ok_or_else(|| PdslError::UnknownVariable { name: name.clone(), subtree: feature.to_string() }),
        Feature::Const(_, dim) => Ok(*dim),
        Feature::Add(a, b) | Feature::Sub(a, b) => {
            let da = check_dimensions(a, sig)?;
            let db = check_dimensions(b, sig)?;
            if da != db {
                return Err(PdslError::DimensionMismatch {
                    left_dim: da,
                    right_dim: db,
                    subtree: feature.to_string(),
                });
            }
            Ok(da)
        }
        Feature::App(name, args) => {
            let def = sig.funcs.get(name).ok_or_else(|| PdslError::UnknownFunction {
                name: name.clone(),
                subtree: feature.to_string(),
            })?;
            if def.arg_dims.len() != args.len() {
                return Err(PdslError::ArityMismatch {
                    name: name.clone(),
                    expected: def.arg_dims.len(),
                    got: args.len(),
                    subtree: feature.to_string(),
                });
            }
            for (arg, expected) in args.iter().zip(&def.arg_dims) {
                let got = check_dimensions(arg, sig)?;
                if got != *expected {
                    return Err(PdslError::DimensionMismatch {
                        left_dim: got,
                        right_dim: *expected,
                        subtree: feature.to_string(),
                    });
                }
            }
            Ok(def.ret_dim)
        }
    }
}

/// Evaluates a feature in a state. Deterministic; assumes the feature
/// dimension-checks against the state's signature.
pub fn eval_feature(feature: &Feature, state: &State) -> Result<f64, PdslError> {
    let sig = state.signature();
    match feature {
        Feature::Var(name) => state.get(name).ok_or_else(|| PdslError::UnknownVariable {
            name: name.clone(),
            subtree: feature.to_string(),
        }),
        Feature::Const(c, _) => Ok(*c),
        Feature::Add(a, b) => Ok(eval_feature(a, state)? + eval_feature(b, state)?),
        Feature::Sub(a, b) => Ok(eval_feature(a, state)? - eval_feature(b, state)?),
        Feature::App(name, args) => {
            let def = sig.funcs.get(name).ok_or_else(|| PdslError::UnknownFunction {
                name: name.clone(),
                subtree: feature.to_string(),
            })?;
            if def.arg_dims.len() != args.len() {
                return Err(PdslError::ArityMismatch {
                    name: name.clone(),
                    expected: def.arg_dims.len(),
                    got: args.len(),
                    subtree: feature.to_string(),
                });
            }
            let mut vals = smallvec::SmallVec::<[f64; 4]>::new();
            for a in args {
                vals.push(eval_feature(a, state)?);
            }
            Ok(def.call(&vals))
        }
    }
}

/// Numerically stable logistic `1 / (1 + exp(-t))`, clamped into (0, 1).
pub fn sigmoid(t: f64) -> f64 {
    let p = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    p.clamp(LOGISTIC_MIN, LOGISTIC_MAX)
}

/// Evaluates a probability expression in a state. A non-finite feature
/// value saturates the probability to 0 or 1 by the sign of the exponent.
pub fn prob_expr_value(expr: &ProbExpr, state: &State) -> Result<f64, PdslError> {
    match expr {
        ProbExpr::Const(r) => Ok(*r),
        ProbExpr::Logistic { feature, x0, k } => {
            let f = eval_feature(feature, state)?;
            let t = k * (f - x0);
            if t.is_nan() {
                log::warn!("non-finite feature value in `{feature}`; treating flip as fair");
                return Ok(0.5);
            }
            if !f.is_finite() {
                log::warn!("non-finite feature value in `{feature}`; saturating probability");
            }
            Ok(sigmoid(t))
        }
    }
}

/// Probability that a guard evaluates to true, under independent flips:
/// conjunction multiplies, disjunction is inclusion-exclusion.
pub fn guard_probability(guard: &Guard, state: &State) -> Result<f64, PdslError> {
    match guard {
        Guard::Flip(p) => prob_expr_value(p, state),
        Guard::And(a, b) => Ok(guard_probability(a, state)? * guard_probability(b, state)?),
        Guard::Or(a, b) => {
            let pa = guard_probability(a, state)?;
            let pb = guard_probability(b, state)?;
            Ok(pa + pb - pa * pb)
        }
    }
}

/// Distribution over next actions, indexed by action label. Rules with the
/// matching source are tried in order; rule i fires with probability
/// p_i · ∏_{j<i}(1 − p_j), and the residual mass stays at `a_prev`.
pub fn transition_distribution(
    policy: &Policy,
    a_prev: ActionLabel,
    state: &State,
) -> Result<Vec<f64>, PdslError> {
    let n = policy.signature().actions.len();
    let mut dist = vec![0.0; n];
    let mut survive = 1.0;
    for &i in policy.rules_from(a_prev) {
        let rule = &policy.rules()[i];
        let p = guard_probability(&rule.guard, state)?;
        dist[rule.to.0] += survive * p;
        survive *= 1.0 - p;
    }
    dist[a_prev.0] += survive;
    Ok(dist)
}

/// Samples the next action by flipping each matching rule's guard in order;
/// distributed exactly as `transition_distribution`.
pub fn sample_next_action<R: Rng + ?Sized>(
    policy: &Policy,
    a_prev: ActionLabel,
    state: &State,
    rng: &mut R,
) -> Result<ActionLabel, PdslError> {
    for &i in policy.rules_from(a_prev) {
        let rule = &policy.rules()[i];
        let p = guard_probability(&rule.guard, state)?;
        if rng.random::<f64>() < p {
            return Ok(rule.to);
        }
    }
    Ok(a_prev)
}
