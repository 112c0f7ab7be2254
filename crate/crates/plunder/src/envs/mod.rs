//! Desk-scale simulation environments: a straight-road stop-sign task and a
//! simplified three-lane merge task. Each environment provides a state
//! signature, kinematic dynamics driven by the observation channels, a
//! per-action Gaussian observation model, a hand-written probabilistic
//! ground-truth policy, and a task-success predicate.

mod merge;
mod stop_sign;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub use merge::Merge;
pub use stop_sign::StopSign;

use crate::pdsl::{
    sample_next_action, ActionLabel, Dimension, PdslError, Policy, Signature, State,
};
use crate::seeds::{rng_for, Prng, STREAM_DEMO};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment `{name}`; available: {available}")]
    UnknownEnv { name: String, available: String },

    #[error("demo file does not match the `{env}` signature: {detail}")]
    SignatureMismatch { env: String, detail: String },

    #[error(transparent)]
    Pdsl(#[from] PdslError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One observation channel: a name, its physical dimension, the observation
/// model's standard deviation, and the default actuation-noise level used
/// when generating demonstrations.
#[derive(Clone, Debug)]
pub struct ObsChannel {
    pub name: &'static str,
    pub dim: Dimension,
    pub sigma_obs: f64,
    pub sigma_act: f64,
}

/// Per-action Gaussian observation model: a mean function over (action,
/// state) and shared per-channel standard deviations.
#[derive(Clone)]
pub struct ObservationModel {
    sigmas: Vec<f64>,
    mean: Arc<dyn Fn(ActionLabel, &State) -> SmallVec<[f64; 2]> + Send + Sync>,
}

impl ObservationModel {
    pub fn new(
        sigmas: Vec<f64>,
        mean: impl Fn(ActionLabel, &State) -> SmallVec<[f64; 2]> + Send + Sync + 'static,
    ) -> Self {
        assert!(sigmas.iter().all(|s| *s > 0.0), "observation sigmas must be positive");
        ObservationModel { sigmas, mean: Arc::new(mean) }
    }

    pub fn num_channels(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn mean(&self, action: ActionLabel, state: &State) -> SmallVec<[f64; 2]> {
        (self.mean)(action, state)
    }

    /// Log-density of an observation vector: the sum over channels of the
    /// Gaussian log-density around `mean(action, state)`.
    pub fn log_density(&self, z: &[f64], action: ActionLabel, state: &State) -> f64 {
        let mu = self.mean(action, state);
        debug_assert_eq!(z.len(), mu.len());
        let mut total = 0.0;
        for ((zi, mi), sigma) in z.iter().zip(mu.iter()).zip(&self.sigmas) {
            let d = (zi - mi) / sigma;
            total += -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * d * d;
        }
        total
    }

    /// Per-step log-density of a noiseless observation at the mean: the
    /// theoretical upper bound on any per-step observation log-likelihood.
    pub fn peak_log_density(&self) -> f64 {
        self.sigmas
            .iter()
            .map(|s| -0.5 * (2.0 * std::f64::consts::PI).ln() - s.ln())
            .sum()
    }
}

pub fn obs_log_density(
    model: &ObservationModel,
    z: &[f64],
    action: ActionLabel,
    state: &State,
) -> f64 {
    model.log_density(z, action, state)
}

/// A recorded execution: states, observation vectors, and (for generated
/// demonstrations) the ground-truth action labels, all of equal length.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub obs: Vec<Vec<f64>>,
    pub gt_actions: Option<Vec<ActionLabel>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A set of demonstrations from one environment at one noise level.
#[derive(Clone, Debug)]
pub struct DemoSet {
    pub env: String,
    pub seed: u64,
    pub sigma_act: Vec<f64>,
    pub split: Split,
    pub demos: Vec<Trajectory>,
}

/// The built-in environments.
#[derive(Clone)]
pub enum Env {
    StopSign(StopSign),
    Merge(Merge),
}

pub const ENV_NAMES: &[&str] = &["ss", "mg"];

impl Env {
    pub fn stop_sign() -> Env {
        Env::StopSign(StopSign::new())
    }

    pub fn merge_lite() -> Env {
        Env::Merge(Merge::new())
    }

    pub fn by_name(name: &str) -> Result<Env, EnvError> {
        match name {
            "ss" => Ok(Env::stop_sign()),
            "mg" => Ok(Env::merge_lite()),
            other => Err(EnvError::UnknownEnv {
                name: other.to_string(),
                available: ENV_NAMES.join(", "),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Env::StopSign(_) => "ss",
            Env::Merge(_) => "mg",
        }
    }

    pub fn signature(&self) -> &Arc<Signature> {
        match self {
            Env::StopSign(e) => e.signature(),
            Env::Merge(e) => e.signature(),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Env::StopSign(e) => e.dt,
            Env::Merge(e) => e.dt,
        }
    }

    pub fn default_horizon(&self) -> usize {
        match self {
            Env::StopSign(e) => e.horizon,
            Env::Merge(e) => e.horizon,
        }
    }

    pub fn channels(&self) -> &[ObsChannel] {
        match self {
            Env::StopSign(e) => e.channels(),
            Env::Merge(e) => e.channels(),
        }
    }

    /// The action the demonstrator starts in.
    pub fn initial_action(&self) -> ActionLabel {
        match self {
            Env::StopSign(e) => e.initial_action(),
            Env::Merge(e) => e.initial_action(),
        }
    }

    /// Randomized start/stop geometry for one episode.
    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Env::StopSign(e) => e.init_state(rng),
            Env::Merge(e) => e.init_state(rng),
        }
    }

    /// Deterministic one-step dynamics driven by the observation vector.
    pub fn step(&self, state: &State, z: &[f64]) -> State {
        match self {
            Env::StopSign(e) => e.step(state, z),
            Env::Merge(e) => e.step(state, z),
        }
    }

    pub fn observation_model(&self) -> ObservationModel {
        match self {
            Env::StopSign(e) => e.observation_model(),
            Env::Merge(e) => e.observation_model(),
        }
    }

    /// The hand-written probabilistic policy used to generate
    /// demonstrations.
    pub fn gt_policy(&self) -> Policy {
        match self {
            Env::StopSign(e) => e.gt_policy(),
            Env::Merge(e) => e.gt_policy(),
        }
    }

    pub fn task_success(&self, traj: &Trajectory) -> bool {
        match self {
            Env::StopSign(e) => e.task_success(traj),
            Env::Merge(e) => e.task_success(traj),
        }
    }

    /// State variables the synthesizer's feature pool is built from.
    pub fn pool_vars(&self) -> &'static [&'static str] {
        match self {
            Env::StopSign(e) => e.pool_vars(),
            Env::Merge(e) => e.pool_vars(),
        }
    }

    /// Default per-channel actuation noise scaled by a sweep multiplier.
    pub fn scaled_sigma_act(&self, mult: f64) -> Vec<f64> {
        self.channels().iter().map(|c| c.sigma_act * mult).collect()
    }

    /// Default convergence threshold on the mean per-step log marginal
    /// likelihood at a given noise multiplier: the expected per-step
    /// log-density of a well-labeled trajectory, minus a calibration slack.
    pub fn default_gamma(&self, sigma_mult: f64) -> f64 {
        let model = self.observation_model();
        let mut expected = model.peak_log_density();
        for c in self.channels() {
            let ratio = c.sigma_act * sigma_mult / c.sigma_obs;
            expected -= 0.5 * ratio * ratio;
        }
        expected - self.gamma_slack()
    }

    fn gamma_slack(&self) -> f64 {
        match self {
            Env::StopSign(e) => e.gamma_slack,
            Env::Merge(e) => e.gamma_slack,
        }
    }
}

/// Rolls out a policy in closed loop: sample an action, emit the model mean
/// plus Gaussian actuation noise, and step the dynamics. Ground-truth
/// actions are recorded.
pub fn rollout(
    env: &Env,
    policy: &Policy,
    model: &ObservationModel,
    horizon: usize,
    sigma_act: &[f64],
    rng: &mut Prng,
) -> Result<Trajectory, PdslError> {
    let mut states = Vec::with_capacity(horizon);
    let mut obs = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);

    let mut state = env.init_state(rng);
    let mut prev = env.initial_action();
    for _ in 0..horizon {
        let action = sample_next_action(policy, prev, &state, rng)?;
        let mut z: Vec<f64> = model.mean(action, &state).to_vec();
        for (zi, sigma) in z.iter_mut().zip(sigma_act) {
            if *sigma > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                *zi += sigma * n;
            }
        }
        let next = env.step(&state, &z);
        states.push(state);
        obs.push(z);
        actions.push(action);
        state = next;
        prev = action;
    }
    Ok(Trajectory { states, obs, gt_actions: Some(actions), seed: 0 })
}

/// Generates `n` demonstrations with the given policy and per-channel
/// actuation noise. Deterministic given the seed; demo `i` draws from its
/// own derived stream.
pub fn generate_demos(
    env: &Env,
    policy: &Policy,
    model: &ObservationModel,
    n: usize,
    horizon: usize,
    sigma_act: &[f64],
    split: Split,
    seed: u64,
) -> Result<DemoSet, PdslError> {
    assert!(n >= 1 && horizon >= 1);
    let split_tag = match split {
        Split::Train => 0u64,
        Split::Test => 1u64,
    };
    let mut demos = Vec::with_capacity(n);
    for i in 0..n {
        let demo_seed = crate::seeds::derive_seed(seed, &[STREAM_DEMO, split_tag, i as u64]);
        let mut rng = rng_for(seed, &[STREAM_DEMO, split_tag, i as u64]);
        let mut traj = rollout(env, policy, model, horizon, sigma_act, &mut rng)?;
        traj.seed = demo_seed;
        demos.push(traj);
    }
    Ok(DemoSet {
        env: env.name().to_string(),
        seed,
        sigma_act: sigma_act.to_vec(),
        split,
        demos,
    })
}

pub fn task_success(env: &Env, traj: &Trajectory) -> bool {
    env.task_success(traj)
}

// --- serialization ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TrajectoryDto {
    seed: u64,
    states: Vec<BTreeMap<String, f64>>,
    obs: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gt_actions: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct DemoSetDto {
    env: String,
    seed: u64,
    sigma_act: Vec<f64>,
    split: Split,
    demos: Vec<TrajectoryDto>,
}

impl DemoSet {
    pub fn to_json(&self) -> Result<String, EnvError> {
        let env = Env::by_name(&self.env)?;
        let sig = env.signature();
        let demos = self
            .demos
            .iter()
            .map(|t| TrajectoryDto {
                seed: t.seed,
                states: t
                    .states
                    .iter()
                    .map(|s| {
                        sig.vars()
                            .map(|(name, _)| (name.to_string(), s.get(name).unwrap()))
                            .collect()
                    })
                    .collect(),
                obs: t.obs.clone(),
                gt_actions: t.gt_actions.as_ref().map(|labels| {
                    labels.iter().map(|l| sig.actions.name(*l).to_string()).collect()
                }),
            })
            .collect();
        let dto = DemoSetDto {
            env: self.env.clone(),
            seed: self.seed,
            sigma_act: self.sigma_act.clone(),
            split: self.split,
            demos,
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    pub fn from_json(text: &str) -> Result<DemoSet, EnvError> {
        let dto: DemoSetDto = serde_json::from_str(text)?;
        let env = Env::by_name(&dto.env)?;
        let sig = env.signature().clone();
        let mut demos = Vec::with_capacity(dto.demos.len());
        for t in &dto.demos {
            let mut states = Vec::with_capacity(t.states.len());
            for m in &t.states {
                let mut values = SmallVec::<[f64; 8]>::new();
                for (name, _) in sig.vars() {
                    match m.get(name) {
                        Some(v) => values.push(*v),
                        None => {
                            return Err(EnvError::SignatureMismatch {
                                env: dto.env.clone(),
                                detail: format!("missing variable `{name}`"),
                            })
                        }
                    }
                }
                if m.len() != sig.num_vars() {
                    return Err(EnvError::SignatureMismatch {
                        env: dto.env.clone(),
                        detail: format!("expected {} variables, got {}", sig.num_vars(), m.len()),
                    });
                }
                states.push(State::new(sig.clone(), values)?);
            }
            let gt_actions = match &t.gt_actions {
                Some(names) => {
                    let mut labels = Vec::with_capacity(names.len());
                    for n in names {
                        labels.push(sig.actions.label(n)?);
                    }
                    Some(labels)
                }
                None => None,
            };
            if t.obs.len() != states.len()
                || gt_actions.as_ref().is_some_and(|g| g.len() != states.len())
            {
                return Err(EnvError::SignatureMismatch {
                    env: dto.env.clone(),
                    detail: "states, obs, and gt_actions must have equal length".to_string(),
                });
            }
            demos.push(Trajectory { states, obs: t.obs.clone(), gt_actions, seed: t.seed });
        }
        Ok(DemoSet {
            env: dto.env,
            seed: dto.seed,
            sigma_act: dto.sigma_act,
            split: dto.split,
            demos,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnvError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DemoSet, EnvError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve_env(&self) -> Result<Env, EnvError> {
        Env::by_name(&self.env)
    }
}

#[cfg(test)]
mod tests;
