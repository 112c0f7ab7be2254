//! Policy synthesis (the M step): enumerate candidate guard sketches around
//! the current policy, fit their probabilistic-threshold parameters to the
//! sampled label sequences per transition, and return the assembled policy
//! that maximizes the size-regularized transition log-likelihood. The
//! previous policy is always among the ranked candidates, so the selected
//! score never regresses.

mod enumerate;
mod examples;
mod fit;
mod lbfgs;
mod objective;

pub use enumerate::{
    build_feature_pool, enumerate_full, enumerate_neighborhood, FeaturePool, Provenance, Sketch,
};
pub use examples::{collect_examples, TransitionExample, TransitionExamples};
pub use fit::{fit_guard_params, FitOutcome};
pub use lbfgs::{minimize, LbfgsOptions, MinimizeResult};
pub use objective::{
    collect_params, grad_guard_loglik, policy_log_posterior, with_params, GuardObjective,
};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::envs::{Env, Trajectory};
use crate::pdsl::{
    ast_size, ActionLabel, Guard, PdslError, Policy, ProbExpr, State, TransitionRule,
};
use crate::seeds::{derive_seed, rng_for, STREAM_ENUMERATE, STREAM_FIT, STREAM_SUBSAMPLE};

/// Which candidate structures the M step searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchSpace {
    /// Mutations of the previous policy plus reset sketches.
    Neighborhood,
    /// Every bounded conjunction/disjunction over the pool (one-shot mode).
    Full { depth: usize },
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    /// Size-prior weight: each AST node costs this many nats.
    pub lambda: f64,
    /// Random initializations per sketch fit.
    pub restarts: usize,
    /// Harvested transition examples are subsampled to this many.
    pub example_cap: usize,
    pub search: SearchSpace,
    /// Enumeration depth for the full search.
    pub depth: usize,
    /// Per-mutation candidate cap in the neighborhood.
    pub mutation_budget: usize,
    pub pool_cap: usize,
    /// Sharpness bound scale: |k| <= k_max_scale / std(feature).
    pub k_max_scale: f64,
    /// Constant flip probabilities are fit inside [floor, 1 - floor].
    pub prob_floor: f64,
    /// Per-example floor on the log of a zero transition probability.
    pub zero_floor: f64,
    pub lbfgs: LbfgsOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            lambda: 0.05,
            restarts: 4,
            example_cap: 2000,
            search: SearchSpace::Neighborhood,
            depth: 2,
            mutation_budget: 24,
            pool_cap: 64,
            k_max_scale: 100.0,
            prob_floor: 1e-3,
            zero_floor: -1e6,
            lbfgs: LbfgsOptions::default(),
        }
    }
}

/// Feature pool for one of the built-in environments.
pub fn feature_pool(env: &Env, cfg: &SynthConfig) -> FeaturePool {
    build_feature_pool(env.signature(), env.pool_vars(), cfg.pool_cap)
}

/// One ranked policy-level candidate, for the per-iteration dump.
#[derive(Clone, Debug, Serialize)]
pub struct CandidateRecord {
    pub label: String,
    pub score: f64,
    pub size: usize,
}

#[derive(Clone, Debug)]
pub struct SynthOutcome {
    pub policy: Policy,
    pub score: f64,
    /// Candidates ranked by score, best first.
    pub candidates: Vec<CandidateRecord>,
}

/// Synthesizes the next policy from sampled label sequences.
///
/// Guards are fit per transition: positives are the harvested steps that
/// took this rule's transition, negatives every other step leaving the same
/// source action. Candidate policies (the full assembly, each single-guard
/// replacement, and the unchanged previous policy) are then ranked by the
/// coupled size-regularized objective. Deterministic given the seed.
pub fn synthesize(
    prev: &Policy,
    demos: &[Trajectory],
    sequences: &[Vec<Vec<ActionLabel>>],
    pool: &FeaturePool,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SynthOutcome, PdslError> {
    let sig = prev.signature().clone();
    let examples = collect_examples(
        demos,
        sequences,
        sig.actions.len(),
        cfg.example_cap,
        derive_seed(seed, &[STREAM_SUBSAMPLE]),
    );

    // Rule list: the previous policy's rules in order, with rules appended
    // (in canonical action-pair order) for observed transitions it lacks.
    let mut rules: Vec<TransitionRule> = prev.rules().to_vec();
    let covered: BTreeSet<(usize, usize)> =
        rules.iter().map(|r| (r.from.0, r.to.0)).collect();
    for (from, to) in examples.observed_pairs() {
        if from != to && !covered.contains(&(from.0, to.0)) {
            rules.push(TransitionRule::new(from, Guard::Flip(ProbExpr::Const(0.1)), to));
        }
    }
    let working = Policy::new(sig.clone(), rules)?;

    // Best fitted guard per rule; rules whose source never appears in the
    // data keep their previous guard.
    let mut fitted: Vec<Option<FitOutcome>> = Vec::with_capacity(working.rules().len());
    for (i, rule) in working.rules().iter().enumerate() {
        if !examples.has_source(rule.from) {
            fitted.push(None);
            continue;
        }
        let source = examples.for_source(rule.from);
        let positives: Vec<(&State, f64)> = source
            .iter()
            .filter(|e| e.next == rule.to)
            .map(|e| (&e.state, e.weight))
            .collect();
        let negatives: Vec<(&State, f64)> = source
            .iter()
            .filter(|e| e.next != rule.to)
            .map(|e| (&e.state, e.weight))
            .collect();

        let sketches = match cfg.search {
            SearchSpace::Neighborhood => enumerate_neighborhood(
                &rule.guard,
                pool,
                &sig,
                cfg.mutation_budget,
                derive_seed(seed, &[STREAM_ENUMERATE, i as u64]),
            ),
            SearchSpace::Full { depth } => enumerate_full(pool, depth, &sig),
        };

        let fits: Vec<FitOutcome> = sketches
            .par_iter()
            .enumerate()
            .map(|(j, sketch)| {
                let mut rng = rng_for(seed, &[STREAM_FIT, i as u64, j as u64]);
                fit_guard_params(&sketch.guard, &positives, &negatives, cfg, &mut rng)
            })
            .collect::<Result<_, _>>()?;

        let best = fits
            .into_iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.score.partial_cmp(&b.score).unwrap().then(ib.cmp(ia))
            })
            .map(|(_, f)| f);
        fitted.push(best);
    }

    // Candidate policies, ranked by the coupled objective.
    let mut assembled_rules = working.rules().to_vec();
    for (i, fit) in fitted.iter().enumerate() {
        if let Some(f) = fit {
            assembled_rules[i].guard = f.guard.clone();
        }
    }
    let assembled = Policy::new(sig.clone(), assembled_rules)?;

    let mut candidates: Vec<(String, Policy)> = vec![("assembled".to_string(), assembled)];
    for (i, fit) in fitted.iter().enumerate() {
        if let Some(f) = fit {
            let rule = &working.rules()[i];
            let label = format!(
                "single[{}->{}]",
                sig.actions.name(rule.from),
                sig.actions.name(rule.to)
            );
            candidates.push((label, working.with_guard(i, f.guard.clone())?));
        }
    }
    candidates.push(("previous".to_string(), prev.clone()));

    let mut scored: Vec<(CandidateRecord, Policy)> = Vec::with_capacity(candidates.len());
    for (label, policy) in candidates {
        let score = policy_log_posterior(&policy, &examples, cfg.lambda, cfg.zero_floor)?;
        scored.push((CandidateRecord { label, score, size: ast_size(&policy) }, policy));
    }
    let best_idx = scored
        .iter()
        .enumerate()
        .max_by(|(ia, (a, _)), (ib, (b, _))| {
            a.score.partial_cmp(&b.score).unwrap().then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .expect("at least one candidate");

    let (best_record, best_policy) = scored[best_idx].clone();
    let mut records: Vec<CandidateRecord> = scored.into_iter().map(|(r, _)| r).collect();
    records.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    log::debug!(
        "synthesize: best candidate `{}` score {:.3} size {}",
        best_record.label,
        best_record.score,
        best_record.size
    );

    Ok(SynthOutcome { policy: best_policy, score: best_record.score, candidates: records })
}

#[cfg(test)]
mod tests;
