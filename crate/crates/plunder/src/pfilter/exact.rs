//! Exact posterior over latent action sequences for small instances. The
//! forward-backward recursion is the primary oracle (O(t·|A|²)); brute-force
//! enumeration over all |A|^t sequences cross-checks it on tiny chains.

use crate::envs::{ObservationModel, Trajectory};
use crate::pdsl::{transition_distribution, ActionLabel, Policy};

use super::FilterError;

const ENUMERATION_LIMIT: f64 = 1e6;

/// Exact posterior: filtered marginals P(a_t | z_{1..t}), smoothed marginals
/// P(a_t | z_{1..T}), and the exact log marginal likelihood of the
/// observations. The initial action prior is uniform, matching the filter.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    pub filtered: Vec<Vec<f64>>,
    pub smoothed: Vec<Vec<f64>>,
    pub log_marginal: f64,
}

/// Forward–backward recursion over the action lattice.
pub fn exact_posterior(
    traj: &Trajectory,
    model: &ObservationModel,
    policy: &Policy,
) -> Result<ExactPosterior, FilterError> {
    assert!(!traj.is_empty());
    let actions: Vec<ActionLabel> = policy.signature().actions.labels().collect();
    let n = actions.len();
    let t_len = traj.len();

    // Per-step observation densities and transition matrices
    // trans[t][from][to], with the policy evaluated at the recorded state.
    let mut dens = vec![vec![0.0; n]; t_len];
    for t in 0..t_len {
        for (i, &a) in actions.iter().enumerate() {
            dens[t][i] = model.log_density(&traj.obs[t], a, &traj.states[t]).exp();
        }
    }
    let mut trans = Vec::with_capacity(t_len);
    trans.push(vec![vec![0.0; n]; n]); // unused at t = 0
    for t in 1..t_len {
        let mut m = Vec::with_capacity(n);
        for &from in &actions {
            m.push(transition_distribution(policy, from, &traj.states[t])?);
        }
        trans.push(m);
    }

    // Scaled forward pass: alpha[t][a] = P(a_t = a | z_{1..t}); the scale
    // factors accumulate the log marginal.
    let mut alpha = vec![vec![0.0; n]; t_len];
    let mut scales = vec![0.0; t_len];
    let mut log_marginal = 0.0;
    for i in 0..n {
        alpha[0][i] = dens[0][i] / n as f64;
    }
    for t in 0..t_len {
        if t > 0 {
            for to in 0..n {
                let mut acc = 0.0;
                for from in 0..n {
                    acc += alpha[t - 1][from] * trans[t][from][to];
                }
                alpha[t][to] = acc * dens[t][to];
            }
        }
        let c: f64 = alpha[t].iter().sum();
        if c <= 0.0 || !c.is_finite() {
            return Err(FilterError::DegenerateWeights { step: t });
        }
        for v in alpha[t].iter_mut() {
            *v /= c;
        }
        scales[t] = c;
        log_marginal += c.ln();
    }

    // Scaled backward pass and smoothed marginals.
    let mut beta = vec![vec![1.0; n]; t_len];
    for t in (0..t_len - 1).rev() {
        for from in 0..n {
            let mut acc = 0.0;
            for to in 0..n {
                acc += trans[t + 1][from][to] * dens[t + 1][to] * beta[t + 1][to];
            }
            beta[t][from] = acc / scales[t + 1];
        }
    }
    let mut smoothed = vec![vec![0.0; n]; t_len];
    for t in 0..t_len {
        let mut norm = 0.0;
        for i in 0..n {
            smoothed[t][i] = alpha[t][i] * beta[t][i];
            norm += smoothed[t][i];
        }
        for v in smoothed[t].iter_mut() {
            *v /= norm;
        }
    }

    Ok(ExactPosterior { filtered: alpha, smoothed, log_marginal })
}

/// Sums the joint density over every action sequence explicitly. Only for
/// tiny instances; feasibility is guarded by |A|^t <= 10^6.
pub fn brute_force_posterior(
    traj: &Trajectory,
    model: &ObservationModel,
    policy: &Policy,
) -> Result<ExactPosterior, FilterError> {
    assert!(!traj.is_empty());
    let actions: Vec<ActionLabel> = policy.signature().actions.labels().collect();
    let n = actions.len();
    let t_len = traj.len();
    let size = (n as f64).powi(t_len as i32);
    if size > ENUMERATION_LIMIT {
        return Err(FilterError::Infeasible { size, limit: ENUMERATION_LIMIT });
    }

    let mut trans = Vec::with_capacity(t_len);
    trans.push(vec![vec![0.0; n]; n]);
    for t in 1..t_len {
        let mut m = Vec::with_capacity(n);
        for &from in &actions {
            m.push(transition_distribution(policy, from, &traj.states[t])?);
        }
        trans.push(m);
    }

    let count = (n as u64).pow(t_len as u32);
    let mut total = 0.0f64;
    let mut marginal_mass = vec![vec![0.0; n]; t_len];
    let mut seq = vec![0usize; t_len];
    for code in 0..count {
        let mut rem = code;
        for slot in seq.iter_mut() {
            *slot = (rem % n as u64) as usize;
            rem /= n as u64;
        }
        let mut joint = 1.0 / n as f64;
        for t in 0..t_len {
            joint *= model
                .log_density(&traj.obs[t], actions[seq[t]], &traj.states[t])
                .exp();
            if t > 0 {
                joint *= trans[t][seq[t - 1]][seq[t]];
            }
        }
        total += joint;
        for t in 0..t_len {
            marginal_mass[t][seq[t]] += joint;
        }
    }

    let smoothed: Vec<Vec<f64>> = marginal_mass
        .iter()
        .map(|row| row.iter().map(|v| v / total).collect())
        .collect();
    // Filtered marginals are not enumerated here; the forward-backward
    // oracle provides them.
    Ok(ExactPosterior { filtered: Vec::new(), smoothed, log_marginal: total.ln() })
}
