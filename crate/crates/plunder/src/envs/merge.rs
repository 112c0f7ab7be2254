//! Simplified Merge task: three lanes, constant-speed traffic in the two
//! left lanes, empty rightmost lane. The ego vehicle starts in the leftmost
//! lane and must reach the rightmost lane without a collision. Traffic in
//! each lane is a periodic convoy; the state tracks the nearest vehicle
//! ahead in the ego lane and the nearest pair around the ego in the
//! right-adjacent lane. Two observation channels: commanded acceleration and
//! a lane-change signal.

use std::sync::Arc;

use rand::Rng;
use smallvec::{smallvec, SmallVec};

use super::{ObsChannel, ObservationModel, Trajectory};
use crate::pdsl::{
    ActionLabel, ActionSet, Dimension, Feature, FunctionRegistry, Guard, Policy, ProbExpr,
    Signature, State, TransitionRule,
};

const X: usize = 0;
const V: usize = 1;
const LANE: usize = 2;
const FX: usize = 3;
const RFX: usize = 4;
const RBX: usize = 5;

const CON: ActionLabel = ActionLabel(0);
const DEC: ActionLabel = ActionLabel(1);
const RIGHT: ActionLabel = ActionLabel(2);

#[derive(Clone)]
pub struct Merge {
    sig: Arc<Signature>,
    channels: Vec<ObsChannel>,
    pub dt: f64,
    pub horizon: usize,
    /// Constant traffic speed in lanes 0 and 1.
    pub v_traffic: f64,
    /// Vehicle spacing per lane; lane 2 is empty.
    pub gap0: f64,
    pub gap1: f64,
    /// Sentinel offset for "no vehicle" in an empty lane.
    pub far: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub v0: f64,
    /// DEC always commands at least this much braking.
    pub dec_floor: f64,
    /// Brake to stop this far behind the vehicle ahead.
    pub brake_margin: f64,
    /// Bumper-to-bumper distance that counts as a collision.
    pub collision_gap: f64,
    pub fx0_range: (f64, f64),
    pub gamma_slack: f64,
}

impl Merge {
    pub fn new() -> Self {
        let sig = Signature::new(
            vec![
                ("x".into(), Dimension::LENGTH),
                ("v".into(), Dimension::VELOCITY),
                ("lane".into(), Dimension::DIMENSIONLESS),
                ("fx".into(), Dimension::LENGTH),
                ("rfx".into(), Dimension::LENGTH),
                ("rbx".into(), Dimension::LENGTH),
            ],
            ActionSet::new(["CON", "DEC", "RIGHT"]).unwrap(),
            FunctionRegistry::default(),
        );
        Merge {
            sig,
            channels: vec![
                ObsChannel {
                    name: "acceleration",
                    dim: Dimension::ACCELERATION,
                    sigma_obs: 0.5,
                    sigma_act: 0.5,
                },
                ObsChannel {
                    name: "lane_change",
                    dim: Dimension::DIMENSIONLESS,
                    sigma_obs: 0.15,
                    sigma_act: 0.15,
                },
            ],
            dt: 0.1,
            horizon: 100,
            v_traffic: 5.0,
            gap0: 150.0,
            gap1: 25.0,
            far: 1000.0,
            a_min: -8.0,
            a_max: 4.0,
            v0: 10.0,
            dec_floor: -0.5,
            brake_margin: 3.0,
            collision_gap: 2.0,
            fx0_range: (60.0, 100.0),
            gamma_slack: 0.25,
        }
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn channels(&self) -> &[ObsChannel] {
        &self.channels
    }

    pub fn initial_action(&self) -> ActionLabel {
        CON
    }

    pub fn pool_vars(&self) -> &'static [&'static str] {
        &["x", "v", "fx", "rfx", "rbx"]
    }

    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let fx = rng.random_range(self.fx0_range.0..self.fx0_range.1);
        // Start just past a right-lane window so every demonstration cruises
        // before the next window drifts into reach.
        let rbx = -rng.random_range(16.0..self.gap1);
        State::new(
            self.sig.clone(),
            smallvec![0.0, self.v0, 0.0, fx, rbx + self.gap1, rbx] as SmallVec<[f64; 8]>,
        )
        .unwrap()
    }

    pub fn step(&self, state: &State, z: &[f64]) -> State {
        let a_eff = z[0].clamp(self.a_min, self.a_max);
        let v = state.get_index(V);
        let x = state.get_index(X);
        let lane = state.get_index(LANE).round() as i32;
        let change = z[1] > 0.5 && lane < 2;
        let lane_next = if change { lane + 1 } else { lane };

        let xp = x + v * self.dt;
        let adv = self.v_traffic * self.dt;
        let fx_t = state.get_index(FX) + adv;
        let rbx_t = state.get_index(RBX) + adv;

        let (fx_n, rfx_n, rbx_n) = if !change {
            let fx_n = match lane {
                0 => norm_ahead(fx_t, xp, self.gap0),
                1 => norm_ahead(fx_t, xp, self.gap1),
                _ => xp + self.far,
            };
            let (rbx_n, rfx_n) = match lane {
                0 => {
                    let b = norm_behind(rbx_t, xp, self.gap1);
                    (b, b + self.gap1)
                }
                // Lane 2 is empty: wide-open window.
                1 => (xp - self.far, xp + self.far),
                // No lane beyond the rightmost: a closed window, so the
                // merge guard cannot fire there.
                _ => (xp, xp),
            };
            (fx_n, rfx_n, rbx_n)
        } else {
            // The old right lane becomes the ego lane.
            let fx_n = match lane {
                0 => norm_ahead(rbx_t + self.gap1, xp, self.gap1),
                _ => xp + self.far,
            };
            let (rbx_n, rfx_n) =
                if lane_next < 2 { (xp - self.far, xp + self.far) } else { (xp, xp) };
            (fx_n, rfx_n, rbx_n)
        };

        let mut next = state.clone();
        next.set_index(X, xp);
        next.set_index(V, (v + a_eff * self.dt).max(0.0));
        next.set_index(LANE, lane_next as f64);
        next.set_index(FX, fx_n);
        next.set_index(RFX, rfx_n);
        next.set_index(RBX, rbx_n);
        next
    }

    fn obs_mean(&self, action: ActionLabel, state: &State) -> SmallVec<[f64; 2]> {
        match action {
            CON => smallvec![0.0, 0.0],
            DEC => smallvec![self.brake_mean(state), 0.0],
            RIGHT => smallvec![0.0, 1.0],
            other => unreachable!("no such action: {other:?}"),
        }
    }

    /// Brake toward the traffic speed so the ego stops `brake_margin`
    /// behind the vehicle ahead, never gentler than `dec_floor`.
    fn brake_mean(&self, state: &State) -> f64 {
        let gap = (state.get_index(FX) - state.get_index(X) - self.brake_margin).max(0.5);
        let dv = (state.get_index(V) - self.v_traffic).max(0.0);
        (-dv * dv / (2.0 * gap)).clamp(self.a_min, self.dec_floor)
    }

    pub fn observation_model(&self) -> ObservationModel {
        let this = self.clone();
        ObservationModel::new(
            self.channels.iter().map(|c| c.sigma_obs).collect(),
            move |a, s| this.obs_mean(a, s),
        )
    }

    /// Hand-written demonstrator: merge right when the right-lane window is
    /// open both ahead and behind; brake when closing on the vehicle ahead;
    /// resume constant speed when the gap reopens or the lane change is done.
    pub fn gt_policy(&self) -> Policy {
        let window = Guard::and(
            Guard::flip(ProbExpr::logistic(
                Feature::sub(Feature::var("rfx"), Feature::var("x")),
                10.0,
                2.0,
            )),
            Guard::flip(ProbExpr::logistic(
                Feature::sub(Feature::var("x"), Feature::var("rbx")),
                6.0,
                2.0,
            )),
        );
        let closing = Guard::flip(ProbExpr::logistic(
            Feature::sub(Feature::var("fx"), Feature::var("x")),
            12.0,
            -0.9,
        ));
        let reopened = Guard::flip(ProbExpr::logistic(
            Feature::sub(Feature::var("fx"), Feature::var("x")),
            16.0,
            0.8,
        ));
        Policy::new(
            self.sig.clone(),
            vec![
                TransitionRule::new(CON, window.clone(), RIGHT),
                TransitionRule::new(DEC, window, RIGHT),
                TransitionRule::new(CON, closing, DEC),
                TransitionRule::new(DEC, reopened, CON),
                TransitionRule::new(RIGHT, Guard::flip(ProbExpr::Const(0.9)), CON),
            ],
        )
        .unwrap()
    }

    /// A state collides when the ego sits within `collision_gap` of the
    /// vehicle ahead or behind in its lane.
    pub fn collided(&self, state: &State) -> bool {
        let lane = state.get_index(LANE).round() as i32;
        if lane >= 2 {
            return false;
        }
        let g = if lane == 0 { self.gap0 } else { self.gap1 };
        let front = state.get_index(FX) - state.get_index(X);
        let back = state.get_index(X) - (state.get_index(FX) - g);
        front < self.collision_gap || back < self.collision_gap
    }

    pub fn task_success(&self, traj: &Trajectory) -> bool {
        let reached = traj
            .states
            .last()
            .is_some_and(|s| s.get_index(LANE).round() as i32 == 2);
        reached && !traj.states.iter().any(|s| self.collided(s))
    }
}

impl Default for Merge {
    fn default() -> Self {
        Self::new()
    }
}

/// Smallest convoy grid point strictly ahead of `x`.
fn norm_ahead(mut p: f64, x: f64, g: f64) -> f64 {
    while p - g > x {
        p -= g;
    }
    while p <= x {
        p += g;
    }
    p
}

/// Largest convoy grid point at or behind `x`.
fn norm_behind(mut p: f64, x: f64, g: f64) -> f64 {
    while p > x {
        p -= g;
    }
    while p + g <= x {
        p += g;
    }
    p
}
