//! Differentiable fitting objective for guard parameters, and the coupled
//! policy objective used to rank assembled candidates.
//!
//! A guard's probability is an algebraic function of its leaf probabilities
//! (conjunction multiplies, disjunction is inclusion-exclusion), and each
//! leaf is a constant or a logistic threshold, so the binary log-likelihood
//! of (state, fired?) data has closed-form partial derivatives in every
//! parameter (r, x0, k).

use crate::pdsl::{
    ast_size, eval_feature, sigmoid, transition_distribution, Guard, PdslError, Policy, ProbExpr,
    State,
};

use super::examples::TransitionExamples;

/// Probabilities are clamped away from 0 and 1 inside logs and gradients.
const P_CLAMP: f64 = 1e-12;

/// Flattened parameter vector of a guard, in depth-first leaf order:
/// `[r]` per constant leaf, `[x0, k]` per logistic leaf.
pub fn collect_params(guard: &Guard) -> Vec<f64> {
    let mut out = Vec::new();
    for leaf in guard.leaves() {
        match leaf {
            ProbExpr::Const(r) => out.push(*r),
            ProbExpr::Logistic { x0, k, .. } => {
                out.push(*x0);
                out.push(*k);
            }
        }
    }
    out
}

/// Rebuilds a guard with new parameter values in the same leaf order.
pub fn with_params(guard: &Guard, params: &[f64]) -> Guard {
    fn walk(g: &Guard, params: &[f64], i: &mut usize) -> Guard {
        match g {
            Guard::Flip(ProbExpr::Const(_)) => {
                let r = params[*i];
                *i += 1;
                Guard::Flip(ProbExpr::Const(r))
            }
            Guard::Flip(ProbExpr::Logistic { feature, .. }) => {
                let x0 = params[*i];
                let k = params[*i + 1];
                *i += 2;
                Guard::Flip(ProbExpr::Logistic { feature: feature.clone(), x0, k })
            }
            Guard::And(a, b) => {
                let left = walk(a, params, i);
                let right = walk(b, params, i);
                Guard::and(left, right)
            }
            Guard::Or(a, b) => {
                let left = walk(a, params, i);
                let right = walk(b, params, i);
                Guard::or(left, right)
            }
        }
    }
    let mut i = 0;
    let out = walk(guard, params, &mut i);
    assert_eq!(i, params.len(), "parameter count mismatch");
    out
}

#[derive(Clone, Copy, Debug)]
enum LeafKind {
    Const,
    Logistic,
}

#[derive(Clone, Debug)]
enum Shape {
    Leaf(usize),
    And(Box<Shape>, Box<Shape>),
    Or(Box<Shape>, Box<Shape>),
}

/// Guard-fitting objective with cached per-leaf feature values, so repeated
/// evaluations during optimization touch no AST or state machinery.
pub struct GuardObjective {
    shape: Shape,
    leaf_kinds: Vec<LeafKind>,
    /// feat[leaf][example]; constant leaves hold an empty row.
    feat: Vec<Vec<f64>>,
    weights: Vec<f64>,
    positive: Vec<bool>,
    param_offsets: Vec<usize>,
    pub n_params: usize,
}

impl GuardObjective {
    pub fn new(
        guard: &Guard,
        positives: &[(&State, f64)],
        negatives: &[(&State, f64)],
    ) -> Result<Self, PdslError> {
        let mut leaf_kinds = Vec::new();
        let mut features = Vec::new();
        fn build(g: &Guard, kinds: &mut Vec<LeafKind>, feats: &mut Vec<Option<crate::pdsl::Feature>>) -> Shape {
            match g {
                Guard::Flip(ProbExpr::Const(_)) => {
                    kinds.push(LeafKind::Const);
                    feats.push(None);
                    Shape::Leaf(kinds.len() - 1)
                }
                Guard::Flip(ProbExpr::Logistic { feature, .. }) => {
                    kinds.push(LeafKind::Logistic);
                    feats.push(Some(feature.clone()));
                    Shape::Leaf(kinds.len() - 1)
                }
                Guard::And(a, b) => {
                    let left = build(a, kinds, feats);
                    let right = build(b, kinds, feats);
                    Shape::And(Box::new(left), Box::new(right))
                }
                Guard::Or(a, b) => {
                    let left = build(a, kinds, feats);
                    let right = build(b, kinds, feats);
                    Shape::Or(Box::new(left), Box::new(right))
                }
            }
        }
        let shape = build(guard, &mut leaf_kinds, &mut features);

        let mut weights = Vec::with_capacity(positives.len() + negatives.len());
        let mut positive = Vec::with_capacity(weights.capacity());
        for (_, w) in positives {
            weights.push(*w);
            positive.push(true);
        }
        for (_, w) in negatives {
            weights.push(*w);
            positive.push(false);
        }

        let mut feat = Vec::with_capacity(leaf_kinds.len());
        for f in &features {
            match f {
                None => feat.push(Vec::new()),
                Some(feature) => {
                    let mut row = Vec::with_capacity(weights.len());
                    for (s, _) in positives.iter().chain(negatives.iter()) {
                        row.push(eval_feature(feature, s)?);
                    }
                    feat.push(row);
                }
            }
        }

        let mut param_offsets = Vec::with_capacity(leaf_kinds.len());
        let mut n_params = 0;
        for kind in &leaf_kinds {
            param_offsets.push(n_params);
            n_params += match kind {
                LeafKind::Const => 1,
                LeafKind::Logistic => 2,
            };
        }

        Ok(GuardObjective { shape, leaf_kinds, feat, weights, positive, param_offsets, n_params })
    }

    pub fn num_examples(&self) -> usize {
        self.weights.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_kinds.len()
    }

    pub fn leaf_is_logistic(&self, leaf: usize) -> bool {
        matches!(self.leaf_kinds[leaf], LeafKind::Logistic)
    }

    pub fn param_offset(&self, leaf: usize) -> usize {
        self.param_offsets[leaf]
    }

    /// Weighted (min, max, std) of a logistic leaf's feature over the data;
    /// used for parameter bounds and restart initialization.
    pub fn feature_stats(&self, leaf: usize) -> (f64, f64, f64) {
        let row = &self.feat[leaf];
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut total_w = 0.0;
        for (v, w) in row.iter().zip(&self.weights) {
            if !v.is_finite() {
                continue;
            }
            min = min.min(*v);
            max = max.max(*v);
            sum += v * w;
            sum_sq += v * v * w;
            total_w += w;
        }
        if total_w == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let mean = sum / total_w;
        let var = (sum_sq / total_w - mean * mean).max(0.0);
        (min, max, var.sqrt())
    }

    fn leaf_probability(&self, leaf: usize, example: usize, params: &[f64]) -> f64 {
        let off = self.param_offsets[leaf];
        match self.leaf_kinds[leaf] {
            LeafKind::Const => params[off].clamp(P_CLAMP, 1.0 - P_CLAMP),
            LeafKind::Logistic => {
                let f = self.feat[leaf][example];
                let (x0, k) = (params[off], params[off + 1]);
                let t = k * (f - x0);
                if t.is_nan() {
                    0.5
                } else {
                    sigmoid(t).clamp(P_CLAMP, 1.0 - P_CLAMP)
                }
            }
        }
    }

    fn prob(&self, shape: &Shape, leaf_p: &[f64]) -> f64 {
        match shape {
            Shape::Leaf(i) => leaf_p[*i],
            Shape::And(a, b) => self.prob(a, leaf_p) * self.prob(b, leaf_p),
            Shape::Or(a, b) => {
                let pa = self.prob(a, leaf_p);
                let pb = self.prob(b, leaf_p);
                pa + pb - pa * pb
            }
        }
    }

    /// Accumulates dP(guard)/dP(leaf) into `grad_leaf` with the chain-rule
    /// multiplier `mult`, returning the subtree probability.
    fn backprop(&self, shape: &Shape, leaf_p: &[f64], mult: f64, grad_leaf: &mut [f64]) -> f64 {
        match shape {
            Shape::Leaf(i) => {
                grad_leaf[*i] += mult;
                leaf_p[*i]
            }
            Shape::And(a, b) => {
                let pa = self.prob(a, leaf_p);
                let pb = self.prob(b, leaf_p);
                self.backprop(a, leaf_p, mult * pb, grad_leaf);
                self.backprop(b, leaf_p, mult * pa, grad_leaf);
                pa * pb
            }
            Shape::Or(a, b) => {
                let pa = self.prob(a, leaf_p);
                let pb = self.prob(b, leaf_p);
                self.backprop(a, leaf_p, mult * (1.0 - pb), grad_leaf);
                self.backprop(b, leaf_p, mult * (1.0 - pa), grad_leaf);
                pa + pb - pa * pb
            }
        }
    }

    /// Weighted log-likelihood of the fired/not-fired data and its gradient
    /// in every parameter.
    pub fn eval(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let n_leaves = self.leaf_kinds.len();
        let mut loglik = 0.0;
        let mut grad = vec![0.0; self.n_params];
        let mut leaf_p = vec![0.0; n_leaves];
        let mut grad_leaf = vec![0.0; n_leaves];

        for ex in 0..self.weights.len() {
            for leaf in 0..n_leaves {
                leaf_p[leaf] = self.leaf_probability(leaf, ex, params);
            }
            grad_leaf.iter_mut().for_each(|g| *g = 0.0);
            let p_raw = self.backprop(&self.shape, &leaf_p, 1.0, &mut grad_leaf);
            let p = p_raw.clamp(P_CLAMP, 1.0 - P_CLAMP);

            let w = self.weights[ex];
            // d/dp of w*ln(p) or w*ln(1-p).
            let (term, dl_dp) = if self.positive[ex] {
                (w * p.ln(), w / p)
            } else {
                (w * (1.0 - p).ln(), -w / (1.0 - p))
            };
            loglik += term;

            for leaf in 0..n_leaves {
                let dl_dleaf = dl_dp * grad_leaf[leaf];
                let off = self.param_offsets[leaf];
                match self.leaf_kinds[leaf] {
                    LeafKind::Const => grad[off] += dl_dleaf,
                    LeafKind::Logistic => {
                        let f = self.feat[leaf][ex];
                        if !f.is_finite() {
                            continue; // saturated; flat in both parameters
                        }
                        let pl = leaf_p[leaf];
                        let s = pl * (1.0 - pl);
                        let (x0, k) = (params[off], params[off + 1]);
                        grad[off] += dl_dleaf * (-k * s);
                        grad[off + 1] += dl_dleaf * (f - x0) * s;
                    }
                }
            }
        }
        (loglik, grad)
    }
}

/// Log-likelihood of guard parameters on labeled (state, fired?) data and
/// its analytic gradient, evaluated directly from the AST.
pub fn grad_guard_loglik(
    guard: &Guard,
    params: &[f64],
    positives: &[(&State, f64)],
    negatives: &[(&State, f64)],
) -> Result<(f64, Vec<f64>), PdslError> {
    let obj = GuardObjective::new(guard, positives, negatives)?;
    assert_eq!(params.len(), obj.n_params);
    Ok(obj.eval(params))
}

/// Coupled ranking objective: the weighted log-probability the policy
/// assigns to every harvested transition, plus the size prior
/// `-lambda * size(policy)`. A zero-probability transition contributes the
/// configured floor instead of negative infinity.
pub fn policy_log_posterior(
    policy: &Policy,
    examples: &TransitionExamples,
    lambda: f64,
    zero_floor: f64,
) -> Result<f64, PdslError> {
    let mut total = 0.0;
    for from in policy.signature().actions.labels() {
        if from.0 >= examples.num_actions() {
            continue;
        }
        for ex in examples.for_source(from) {
            let dist = transition_distribution(policy, from, &ex.state)?;
            let p = dist[ex.next.0];
            let logp = if p > 0.0 { p.ln().max(zero_floor) } else { zero_floor };
            total += ex.weight * logp;
        }
    }
    Ok(total - lambda * ast_size(policy) as f64)
}
