//! Completing a guard sketch: quasi-Newton maximization of the binary
//! log-likelihood from several random initializations within parameter
//! bounds, keeping the best.

use rand::Rng;

use crate::pdsl::{Guard, PdslError, State};
use crate::seeds::Prng;

use super::lbfgs::minimize;
use super::objective::{collect_params, with_params, GuardObjective};
use super::SynthConfig;

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub guard: Guard,
    /// Total weighted log-likelihood of the fitted guard on the data.
    pub score: f64,
    pub converged: bool,
}

/// Fits all numeric parameters of `sketch` to weighted positive/negative
/// examples. The first restart warm-starts from the parameters embedded in
/// the sketch; the rest draw random initializations from the data ranges.
pub fn fit_guard_params(
    sketch: &Guard,
    positives: &[(&State, f64)],
    negatives: &[(&State, f64)],
    cfg: &SynthConfig,
    rng: &mut Prng,
) -> Result<FitOutcome, PdslError> {
    let obj = GuardObjective::new(sketch, positives, negatives)?;
    let n = obj.n_params;

    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut leaf_stats = Vec::with_capacity(obj.num_leaves());
    for leaf in 0..obj.num_leaves() {
        let off = obj.param_offset(leaf);
        if obj.leaf_is_logistic(leaf) {
            let (min, max, std) = obj.feature_stats(leaf);
            let k_max = cfg.k_max_scale / std.max(1e-3);
            lower[off + 1] = -k_max;
            upper[off + 1] = k_max;
            leaf_stats.push((min, max, std));
        } else {
            lower[off] = cfg.prob_floor;
            upper[off] = 1.0 - cfg.prob_floor;
            leaf_stats.push((0.0, 0.0, 0.0));
        }
    }

    // All initializations are drawn up front in a fixed order.
    let mut inits = Vec::with_capacity(cfg.restarts);
    inits.push(collect_params(sketch));
    for _ in 1..cfg.restarts {
        let mut x = Vec::with_capacity(n);
        for leaf in 0..obj.num_leaves() {
            let (min, max, std) = leaf_stats[leaf];
            if obj.leaf_is_logistic(leaf) {
                let x0 = if max > min { rng.random_range(min..max) } else { min - 1.0 };
                let scale = std.max(1e-3);
                let magnitude = rng.random_range(0.25..4.0) / scale;
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                x.push(x0);
                x.push(sign * magnitude);
            } else {
                x.push(rng.random_range(0.05..0.95));
            }
        }
        inits.push(x);
    }

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for init in inits {
        let result = minimize(
            |p| {
                let (ll, grad) = obj.eval(p);
                (-ll, grad.into_iter().map(|g| -g).collect())
            },
            &init,
            &lower,
            &upper,
            &cfg.lbfgs,
        );
        let score = -result.f;
        let replace = match &best {
            None => true,
            Some((s, _, _)) => score > *s,
        };
        if replace {
            best = Some((score, result.x, result.converged));
        }
    }

    let (score, params, converged) = best.expect("at least one restart");
    if !converged {
        log::debug!("guard fit did not fully converge; keeping best iterate");
    }
    Ok(FitOutcome { guard: with_params(sketch, &params), score, converged })
}
