//! Latent-action inference: a bootstrap particle filter over action labels
//! given a candidate policy and the observation model, with systematic
//! resampling, ancestral-lineage traceback, and an exact small-instance
//! oracle (forward-backward, cross-checked by brute-force enumeration).

mod exact;

pub use exact::{brute_force_posterior, exact_posterior, ExactPosterior};

use rand::Rng;
use thiserror::Error;

use crate::envs::{ObservationModel, Trajectory};
use crate::pdsl::{transition_distribution, ActionLabel, PdslError, Policy};
use crate::seeds::Prng;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("all particle weights vanished at step {step}; observation model is degenerate")]
    DegenerateWeights { step: usize },

    #[error("exact enumeration infeasible: |A|^t = {size} exceeds {limit}")]
    Infeasible { size: f64, limit: f64 },

    #[error(transparent)]
    Pdsl(#[from] PdslError),
}

/// One particle: its action hypothesis for the current step, the index of
/// its ancestor in the previous generation, and its observation log-weight.
#[derive(Clone, Copy, Debug)]
pub struct Particle {
    pub action: ActionLabel,
    pub parent: usize,
    pub log_weight: f64,
}

/// Filter output: the particle history with ancestry, the per-step
/// normalized log-mean-weights, and their sum, the log marginal likelihood
/// of the observations under the policy.
#[derive(Clone, Debug)]
pub struct FilterResult {
    pub generations: Vec<Vec<Particle>>,
    pub per_step_log_mean_weight: Vec<f64>,
    pub log_marginal: f64,
    /// Resampled slots of the final generation; drawing uniformly from
    /// these realizes the final particle population.
    pub final_parents: Vec<usize>,
}

impl FilterResult {
    pub fn num_particles(&self) -> usize {
        self.final_parents.len()
    }

    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }
}

fn log_mean_exp(log_weights: &[f64]) -> f64 {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    max + (sum / log_weights.len() as f64).ln()
}

/// Systematic (low-variance) resampling: returns `m` parent indices drawn
/// with a single uniform offset, so the copy count of index i deviates from
/// m·w̄_i by less than one.
pub fn resample_systematic<R: Rng + ?Sized>(
    log_weights: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>, FilterError> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(FilterError::DegenerateWeights { step: 0 });
    }
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();

    let mut parents = Vec::with_capacity(m);
    let step = total / m as f64;
    let mut position = rng.random::<f64>() * step;
    let mut cumulative = weights[0];
    let mut index = 0usize;
    for _ in 0..m {
        while position > cumulative && index + 1 < weights.len() {
            index += 1;
            cumulative += weights[index];
        }
        parents.push(index);
        position += step;
    }
    Ok(parents)
}

/// Runs the particle filter for one demonstration: generation 0 is drawn
/// from a uniform prior over actions, each later generation propagates
/// through the policy at the recorded state, re-weights by the observation
/// log-density, and resamples systematically. The log marginal accumulates
/// before each resampling step.
pub fn run_filter(
    traj: &Trajectory,
    model: &ObservationModel,
    policy: &Policy,
    m: usize,
    rng: &mut Prng,
) -> Result<FilterResult, FilterError> {
    assert!(m >= 1, "need at least one particle");
    assert!(!traj.is_empty(), "cannot filter an empty trajectory");
    let actions: Vec<ActionLabel> = policy.signature().actions.labels().collect();
    let n_actions = actions.len();

    let mut generations: Vec<Vec<Particle>> = Vec::with_capacity(traj.len());
    let mut per_step = Vec::with_capacity(traj.len());

    // Generation 0: uniform prior over the action set.
    let mut gen: Vec<Particle> = (0..m)
        .map(|_| {
            let action = actions[rng.random_range(0..n_actions)];
            Particle { action, parent: 0, log_weight: 0.0 }
        })
        .collect();
    for p in &mut gen {
        p.log_weight = model.log_density(&traj.obs[0], p.action, &traj.states[0]);
    }
    let step_weight = log_mean_exp(&collect_weights(&gen));
    if !step_weight.is_finite() {
        return Err(FilterError::DegenerateWeights { step: 0 });
    }
    per_step.push(step_weight);
    let mut parents = resample_systematic(&collect_weights(&gen), m, rng)?;
    generations.push(gen);

    for t in 1..traj.len() {
        let state = &traj.states[t];
        // All particles share the recorded state, so the transition
        // distribution depends only on the previous action: cache one
        // cumulative distribution per action.
        let mut cdfs: Vec<Vec<f64>> = Vec::with_capacity(n_actions);
        for &a in &actions {
            let dist = transition_distribution(policy, a, state)?;
            let mut cdf = dist;
            for i in 1..cdf.len() {
                cdf[i] += cdf[i - 1];
            }
            cdfs.push(cdf);
        }

        let prev = generations.last().unwrap();
        let mut gen: Vec<Particle> = Vec::with_capacity(m);
        for &parent in &parents {
            let cdf = &cdfs[prev[parent].action.0];
            let u = rng.random::<f64>();
            let mut choice = n_actions - 1;
            for (i, c) in cdf.iter().enumerate() {
                if u < *c {
                    choice = i;
                    break;
                }
            }
            let action = actions[choice];
            let log_weight = model.log_density(&traj.obs[t], action, state);
            gen.push(Particle { action, parent, log_weight });
        }
        let step_weight = log_mean_exp(&collect_weights(&gen));
        if !step_weight.is_finite() {
            return Err(FilterError::DegenerateWeights { step: t });
        }
        per_step.push(step_weight);
        parents = resample_systematic(&collect_weights(&gen), m, rng)?;
        generations.push(gen);
    }

    Ok(FilterResult {
        log_marginal: per_step.iter().sum(),
        per_step_log_mean_weight: per_step,
        generations,
        final_parents: parents,
    })
}

fn collect_weights(gen: &[Particle]) -> Vec<f64> {
    gen.iter().map(|p| p.log_weight).collect()
}

/// Draws `n` particles uniformly from the resampled final generation and
/// follows parent pointers back to time zero, yielding `n` full action-label
/// sequences. With `n` equal to the particle count every final slot is used
/// exactly once.
pub fn traceback_samples(
    fr: &FilterResult,
    n: usize,
    rng: &mut Prng,
) -> Vec<Vec<ActionLabel>> {
    let m = fr.num_particles();
    assert!(n <= m, "cannot trace more lineages than particles");
    let slots: Vec<usize> = if n == m {
        (0..m).collect()
    } else {
        // Partial Fisher-Yates: a uniform subset without replacement.
        let mut all: Vec<usize> = (0..m).collect();
        for i in 0..n {
            let j = rng.random_range(i..m);
            all.swap(i, j);
        }
        all.truncate(n);
        all
    };

    let t_len = fr.len();
    let mut out = Vec::with_capacity(n);
    for slot in slots {
        let mut seq = vec![ActionLabel(0); t_len];
        let mut idx = fr.final_parents[slot];
        for t in (0..t_len).rev() {
            let p = fr.generations[t][idx];
            seq[t] = p.action;
            idx = p.parent;
        }
        out.push(seq);
    }
    out
}

/// Per-step action frequencies over `n` traced lineages: a Monte-Carlo
/// estimate of the smoothed posterior marginals.
pub fn lineage_marginals(
    fr: &FilterResult,
    n_actions: usize,
    n: usize,
    rng: &mut Prng,
) -> Vec<Vec<f64>> {
    let lineages = traceback_samples(fr, n, rng);
    let t_len = fr.len();
    let mut marginals = vec![vec![0.0; n_actions]; t_len];
    for seq in &lineages {
        for (t, a) in seq.iter().enumerate() {
            marginals[t][a.0] += 1.0;
        }
    }
    for row in &mut marginals {
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    marginals
}

#[cfg(test)]
mod tests;
