//! Engine and experiment harness for learning probabilistic programmatic
//! action-selection policies from unlabeled, noisy demonstrations.
//!
//! The pipeline alternates two steps inside an expectation-maximization
//! loop: a particle filter samples posterior action-label sequences for the
//! demonstrations under the current policy (E step), and an enumerative
//! synthesizer with quasi-Newton parameter fitting searches the syntactic
//! neighborhood of the current policy for the next one (M step). Built-in
//! desk-scale driving environments, two labeling baselines, and the usual
//! metrics (label accuracy, observation log-likelihood, task success rate)
//! round out the harness.

pub mod em;
pub mod envs;
pub mod eval;
pub mod pdsl;
pub mod pfilter;
pub mod seeds;
pub mod synth;
