use std::sync::Arc;

use approx::assert_abs_diff_eq;
use smallvec::smallvec;

use super::*;
use crate::envs::ObservationModel;
use crate::pdsl::{
    ActionSet, Dimension, Feature, FunctionRegistry, Guard, ProbExpr, Signature, State,
    TransitionRule,
};
use crate::seeds::rng_for;

/// T=5, |A|=2 chain: a state-dependent switch guard A→B and a constant
/// switch-back B→A, with overlapping per-action observation means.
struct ToyChain {
    traj: Trajectory,
    model: ObservationModel,
    policy: Policy,
}

fn toy_sig() -> Arc<Signature> {
    Signature::new(
        vec![("x".into(), Dimension::DIMENSIONLESS)],
        ActionSet::new(["A", "B"]).unwrap(),
        FunctionRegistry::default(),
    )
}

fn toy_chain(sigma: f64) -> ToyChain {
    let sig = toy_sig();
    let a = sig.actions.label("A").unwrap();
    let b = sig.actions.label("B").unwrap();
    let policy = Policy::new(
        sig.clone(),
        vec![
            TransitionRule::new(a, Guard::flip(ProbExpr::logistic(Feature::var("x"), 0.0, 1.0)), b),
            TransitionRule::new(b, Guard::flip(ProbExpr::Const(0.2)), a),
        ],
    )
    .unwrap();

    let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let zs = [0.1, 0.9, 0.4, 0.7, 0.0];
    let states = xs
        .iter()
        .map(|&x| State::new(sig.clone(), smallvec![x]).unwrap())
        .collect();
    let obs = zs.iter().map(|&z| vec![z]).collect();
    let traj = Trajectory { states, obs, gt_actions: None, seed: 0 };

    // Means: A -> 0, B -> 1; overlapping for sigma near 1.
    let model = ObservationModel::new(vec![sigma], move |action, _s| {
        if action.0 == 0 {
            smallvec![0.0]
        } else {
            smallvec![1.0]
        }
    });
    ToyChain { traj, model, policy }
}

fn single_action_setup() -> (Trajectory, ObservationModel, Policy) {
    let sig = Signature::new(
        vec![("x".into(), Dimension::DIMENSIONLESS)],
        ActionSet::new(["ONLY"]).unwrap(),
        FunctionRegistry::default(),
    );
    let policy = Policy::new(sig.clone(), vec![]).unwrap();
    let states = (0..6)
        .map(|i| State::new(sig.clone(), smallvec![i as f64]).unwrap())
        .collect();
    let obs = (0..6).map(|i| vec![0.3 * i as f64]).collect();
    let traj = Trajectory { states, obs, gt_actions: None, seed: 0 };
    let model = ObservationModel::new(vec![0.5], |_a, s| smallvec![0.1 * s.get_index(0)]);
    (traj, model, policy)
}

#[test]
fn resample_uniform_weights_copies_each_once() {
    let mut rng = rng_for(1, &[]);
    let log_weights = vec![0.0; 8];
    let parents = resample_systematic(&log_weights, 8, &mut rng).unwrap();
    let mut counts = vec![0usize; 8];
    for p in parents {
        counts[p] += 1;
    }
    assert_eq!(counts, vec![1; 8]);
}

#[test]
fn resample_degenerate_weight_takes_all() {
    let mut rng = rng_for(2, &[]);
    let log_weights = vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
    let parents = resample_systematic(&log_weights, 5, &mut rng).unwrap();
    assert!(parents.iter().all(|&p| p == 1));
}

#[test]
fn resample_expected_copy_counts() {
    // Normalized weights (0.75, 0.25) at m = 4 give copy counts (3, 1)
    // for every offset draw.
    for seed in 0..20 {
        let mut rng = rng_for(seed, &[]);
        let log_weights = vec![0.75f64.ln(), 0.25f64.ln()];
        let parents = resample_systematic(&log_weights, 4, &mut rng).unwrap();
        let zeros = parents.iter().filter(|&&p| p == 0).count();
        assert_eq!(zeros, 3, "seed {seed}: {parents:?}");
    }
}

#[test]
fn resample_all_minus_infinity_errors() {
    let mut rng = rng_for(3, &[]);
    let log_weights = vec![f64::NEG_INFINITY; 4];
    assert!(matches!(
        resample_systematic(&log_weights, 4, &mut rng),
        Err(FilterError::DegenerateWeights { .. })
    ));
}

#[test]
fn single_action_filter_matches_density_sum() {
    let (traj, model, policy) = single_action_setup();
    let only = ActionLabel(0);
    let expected: f64 = (0..traj.len())
        .map(|t| model.log_density(&traj.obs[t], only, &traj.states[t]))
        .sum();
    let mut rng = rng_for(7, &[]);
    let fr = run_filter(&traj, &model, &policy, 16, &mut rng).unwrap();
    assert_abs_diff_eq!(fr.log_marginal, expected, epsilon = 1e-9);

    // The exact oracle agrees exactly, and all marginals are 1.
    let exact = exact_posterior(&traj, &model, &policy).unwrap();
    assert_abs_diff_eq!(exact.log_marginal, expected, epsilon = 1e-12);
    assert!(exact.smoothed.iter().all(|row| row == &vec![1.0]));
}

#[test]
fn uninformative_likelihood_recovers_prior_marginals() {
    // Observation density independent of the action: the posterior is the
    // policy's forward process from the uniform prior.
    let chain = toy_chain(0.8);
    let flat_model = ObservationModel::new(vec![1.0], |_a, _s| smallvec![0.0]);
    let traj = Trajectory {
        states: chain.traj.states.clone(),
        obs: vec![vec![0.0]; 5],
        gt_actions: None,
        seed: 0,
    };

    let exact = exact_posterior(&traj, &flat_model, &chain.policy).unwrap();
    // Forward prior marginals by direct recursion.
    let mut prior = vec![0.5f64, 0.5];
    for t in 0..5 {
        if t > 0 {
            let mut next = vec![0.0, 0.0];
            for from in 0..2 {
                let d = crate::pdsl::transition_distribution(
                    &chain.policy,
                    ActionLabel(from),
                    &traj.states[t],
                )
                .unwrap();
                for to in 0..2 {
                    next[to] += prior[from] * d[to];
                }
            }
            prior = next;
        }
        for a in 0..2 {
            assert_abs_diff_eq!(exact.smoothed[t][a], prior[a], epsilon = 1e-12);
        }
    }

    let mut rng = rng_for(5, &[]);
    let fr = run_filter(&traj, &flat_model, &chain.policy, 20_000, &mut rng).unwrap();
    let marginals = lineage_marginals(&fr, 2, 20_000, &mut rng);
    for t in 0..5 {
        assert_abs_diff_eq!(marginals[t][0], exact.smoothed[t][0], epsilon = 0.02);
    }
}

#[test]
fn forward_backward_agrees_with_brute_force() {
    let chain = toy_chain(0.8);
    let fb = exact_posterior(&chain.traj, &chain.model, &chain.policy).unwrap();
    let bf = brute_force_posterior(&chain.traj, &chain.model, &chain.policy).unwrap();
    assert_abs_diff_eq!(fb.log_marginal, bf.log_marginal, epsilon = 1e-10);
    for t in 0..chain.traj.len() {
        for a in 0..2 {
            assert_abs_diff_eq!(fb.smoothed[t][a], bf.smoothed[t][a], epsilon = 1e-10);
        }
    }
}

#[test]
fn brute_force_rejects_infeasible_sizes() {
    let chain = toy_chain(0.8);
    let mut traj = chain.traj.clone();
    // Stretch to 25 steps: 2^25 > 10^6.
    while traj.states.len() < 25 {
        traj.states.push(traj.states[0].clone());
        traj.obs.push(traj.obs[0].clone());
    }
    assert!(matches!(
        brute_force_posterior(&traj, &chain.model, &chain.policy),
        Err(FilterError::Infeasible { .. })
    ));
}

#[test]
fn filter_marginals_match_exact_posterior() {
    let chain = toy_chain(0.8);
    let exact = exact_posterior(&chain.traj, &chain.model, &chain.policy).unwrap();

    let seeds = 30;
    let m = 10_000;
    let mut mean_marginals = vec![vec![0.0; 2]; 5];
    let mut mean_log_marginal = 0.0;
    for seed in 0..seeds {
        let mut rng = rng_for(1000 + seed, &[]);
        let fr = run_filter(&chain.traj, &chain.model, &chain.policy, m, &mut rng).unwrap();
        mean_log_marginal += fr.log_marginal / seeds as f64;
        let marginals = lineage_marginals(&fr, 2, m, &mut rng);
        for t in 0..5 {
            for a in 0..2 {
                mean_marginals[t][a] += marginals[t][a] / seeds as f64;
            }
        }
    }

    for t in 0..5 {
        for a in 0..2 {
            assert!(
                (mean_marginals[t][a] - exact.smoothed[t][a]).abs() <= 0.05,
                "t={t} a={a}: pf {} vs exact {}",
                mean_marginals[t][a],
                exact.smoothed[t][a]
            );
        }
    }
    assert!(
        (mean_log_marginal - exact.log_marginal).abs() <= 0.1,
        "pf logZ {mean_log_marginal} vs exact {}",
        exact.log_marginal
    );
}

#[test]
fn traceback_uses_every_slot_when_n_equals_m() {
    let chain = toy_chain(0.8);
    let mut rng = rng_for(11, &[]);
    let fr = run_filter(&chain.traj, &chain.model, &chain.policy, 64, &mut rng).unwrap();
    let lineages = traceback_samples(&fr, 64, &mut rng);
    assert_eq!(lineages.len(), 64);
    assert!(lineages.iter().all(|l| l.len() == 5));

    // Single-particle filter: the one lineage.
    let mut rng = rng_for(12, &[]);
    let fr = run_filter(&chain.traj, &chain.model, &chain.policy, 1, &mut rng).unwrap();
    let lineages = traceback_samples(&fr, 1, &mut rng);
    assert_eq!(lineages.len(), 1);
}

#[test]
fn lineage_frequencies_match_exact_joint() {
    // Compare full-sequence frequencies against the exact joint posterior
    // over all 2^5 sequences, within 3-sigma multinomial bounds.
    let chain = toy_chain(0.8);
    let actions: Vec<ActionLabel> = chain.policy.signature().actions.labels().collect();

    // Exact joint by enumeration.
    let mut joint = std::collections::HashMap::new();
    let mut total = 0.0;
    for code in 0..32u32 {
        let seq: Vec<usize> = (0..5).map(|t| ((code >> t) & 1) as usize).collect();
        let mut p = 0.5;
        for t in 0..5 {
            p *= chain
                .model
                .log_density(&chain.traj.obs[t], actions[seq[t]], &chain.traj.states[t])
                .exp();
            if t > 0 {
                let d = crate::pdsl::transition_distribution(
                    &chain.policy,
                    actions[seq[t - 1]],
                    &chain.traj.states[t],
                )
                .unwrap();
                p *= d[seq[t]];
            }
        }
        joint.insert(seq, p);
        total += p;
    }

    let n = 1000;
    let mut counts: std::collections::HashMap<Vec<usize>, usize> = std::collections::HashMap::new();
    let trials = 20;
    for seed in 0..trials {
        let mut rng = rng_for(900 + seed, &[]);
        let fr = run_filter(&chain.traj, &chain.model, &chain.policy, 10_000, &mut rng).unwrap();
        for lineage in traceback_samples(&fr, n / trials as usize, &mut rng) {
            let key: Vec<usize> = lineage.iter().map(|a| a.0).collect();
            *counts.entry(key).or_default() += 1;
        }
    }

    for (seq, p) in &joint {
        let prob = p / total;
        let freq = counts.get(seq).copied().unwrap_or(0) as f64 / n as f64;
        let sigma = (prob * (1.0 - prob) / n as f64).sqrt();
        // 3-sigma multinomial bound, plus a small floor for the particle
        // approximation itself.
        assert!(
            (freq - prob).abs() <= 3.0 * sigma + 0.01,
            "seq {seq:?}: freq {freq} vs prob {prob}"
        );
    }
}

#[test]
fn filter_is_deterministic_given_seed() {
    let chain = toy_chain(0.8);
    let run = |seed: u64| {
        let mut rng = rng_for(seed, &[]);
        let fr = run_filter(&chain.traj, &chain.model, &chain.policy, 256, &mut rng).unwrap();
        (fr.log_marginal, traceback_samples(&fr, 256, &mut rng))
    };
    let (la, ta) = run(33);
    let (lb, tb) = run(33);
    assert_eq!(la, lb);
    assert_eq!(ta, tb);
    let (lc, _) = run(34);
    assert_ne!(la, lc);
}
