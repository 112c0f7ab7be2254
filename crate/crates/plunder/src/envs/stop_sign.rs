//! Stop-Sign task: a vehicle on a straight road accelerates from rest,
//! cruises near a recommended speed, and brakes to a halt at the next stop
//! sign. Single observation channel: the commanded acceleration.

use std::sync::Arc;

use rand::Rng;
use smallvec::{smallvec, SmallVec};

use super::{ObsChannel, ObservationModel, Trajectory};
use crate::pdsl::{
    ActionLabel, ActionSet, Dimension, Feature, FuncDef, FunctionRegistry, Guard, Policy,
    ProbExpr, Signature, State, TransitionRule,
};

// State layout: v, vmax, amin, amax, adec, dstop.
const V: usize = 0;
const DSTOP: usize = 5;

const ACC: ActionLabel = ActionLabel(0);
const CON: ActionLabel = ActionLabel(1);
const DEC: ActionLabel = ActionLabel(2);

#[derive(Clone)]
pub struct StopSign {
    sig: Arc<Signature>,
    channels: Vec<ObsChannel>,
    pub dt: f64,
    pub horizon: usize,
    /// Commanded acceleration while in ACC.
    pub a_acc: f64,
    /// Actuator limits; commanded accelerations are clamped into
    /// [a_min, a_max] before integration.
    pub a_max: f64,
    pub a_min: f64,
    /// The demonstrator's comfortable planning deceleration (the `adec`
    /// state variable).
    pub a_dec: f64,
    /// Brake-hold command once stopped; keeps the DEC mean distinct from
    /// CON in every state.
    pub dec_hold: f64,
    pub vmax_range: (f64, f64),
    pub dstop_range: (f64, f64),
    pub stop_dist_tol: f64,
    pub stop_speed_tol: f64,
    pub gamma_slack: f64,
}

impl StopSign {
    pub fn new() -> Self {
        let funcs = FunctionRegistry::new(vec![
            FuncDef::new(
                "distTrv",
                vec![Dimension::VELOCITY, Dimension::ACCELERATION],
                Dimension::LENGTH,
                |args| args[0] * args[0] / (2.0 * args[1].abs()),
            ),
            FuncDef::new(
                "timeToStp",
                vec![Dimension::VELOCITY, Dimension::ACCELERATION],
                Dimension::TIME,
                |args| args[0] / args[1].abs(),
            ),
        ]);
        let sig = Signature::new(
            vec![
                ("v".into(), Dimension::VELOCITY),
                ("vmax".into(), Dimension::VELOCITY),
                ("amin".into(), Dimension::ACCELERATION),
                ("amax".into(), Dimension::ACCELERATION),
                ("adec".into(), Dimension::ACCELERATION),
                ("dstop".into(), Dimension::LENGTH),
            ],
            ActionSet::new(["ACC", "CON", "DEC"]).unwrap(),
            funcs,
        );
        StopSign {
            sig,
            channels: vec![ObsChannel {
                name: "acceleration",
                dim: Dimension::ACCELERATION,
                sigma_obs: 0.5,
                sigma_act: 0.5,
            }],
            dt: 0.1,
            horizon: 125,
            a_acc: 4.0,
            a_max: 13.0,
            a_min: -20.0,
            a_dec: -2.0,
            dec_hold: -0.25,
            vmax_range: (9.0, 12.0),
            dstop_range: (45.0, 70.0),
            stop_dist_tol: 2.0,
            stop_speed_tol: 0.5,
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
        ACC
    }

    pub fn pool_vars(&self) -> &'static [&'static str] {
        &["v", "vmax", "amin", "amax", "adec", "dstop"]
    }

    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let vmax = rng.random_range(self.vmax_range.0..self.vmax_range.1);
        let dstop = rng.random_range(self.dstop_range.0..self.dstop_range.1);
        State::new(
            self.sig.clone(),
            smallvec![0.0, vmax, self.a_min, self.a_max, self.a_dec, dstop] as SmallVec<[f64; 8]>,
        )
        .unwrap()
    }

    /// Euler step: speed integrates the clamped commanded acceleration and
    /// never goes negative; the remaining distance shrinks by the distance
    /// covered at the pre-step speed.
    pub fn step(&self, state: &State, z: &[f64]) -> State {
        let a_eff = z[0].clamp(self.a_min, self.a_max);
        let v = state.get_index(V);
        let mut next = state.clone();
        next.set_index(V, (v + a_eff * self.dt).max(0.0));
        next.set_index(DSTOP, state.get_index(DSTOP) - v * self.dt);
        next
    }

    fn obs_mean(&self, action: ActionLabel, state: &State) -> SmallVec<[f64; 2]> {
        let mu = match action {
            ACC => self.a_acc.min(self.a_max),
            CON => 0.0,
            DEC => self.brake_mean(state.get_index(V), state.get_index(DSTOP)),
            other => unreachable!("no such action: {other:?}"),
        };
        smallvec![mu]
    }

    /// Brake to stop exactly at the sign: command -v^2/(2*dstop), clamped to
    /// the actuator floor, with a small brake-hold so DEC stays identifiable
    /// when slow or stopped.
    fn brake_mean(&self, v: f64, dstop: f64) -> f64 {
        if v <= 0.0 {
            return self.dec_hold;
        }
        let raw = if dstop > 1e-6 { -v * v / (2.0 * dstop) } else { self.a_min };
        raw.clamp(self.a_min, self.dec_hold)
    }

    pub fn observation_model(&self) -> ObservationModel {
        let this = self.clone();
        ObservationModel::new(
            self.channels.iter().map(|c| c.sigma_obs).collect(),
            move |a, s| this.obs_mean(a, s),
        )
    }

    /// Hand-written demonstrator: ease off to constant speed as `v` nears
    /// `vmax`, and start braking when the comfortable stopping distance
    /// approaches the remaining distance to the sign.
    pub fn gt_policy(&self) -> Policy {
        let acc_to_con = Guard::flip(ProbExpr::logistic(
            Feature::sub(Feature::var("v"), Feature::var("vmax")),
            -0.4,
            1.3,
        ));
        let con_to_dec = Guard::flip(ProbExpr::logistic(
            Feature::sub(
                Feature::app("distTrv", vec![Feature::var("v"), Feature::var("adec")]),
                Feature::var("dstop"),
            ),
            2.8,
            0.8,
        ));
        Policy::new(
            self.sig.clone(),
            vec![
                TransitionRule::new(ACC, acc_to_con, CON),
                TransitionRule::new(CON, con_to_dec, DEC),
            ],
        )
        .unwrap()
    }

    pub fn task_success(&self, traj: &Trajectory) -> bool {
        match traj.states.last() {
            Some(s) => {
                s.get_index(DSTOP).abs() <= self.stop_dist_tol
                    && s.get_index(V) <= self.stop_speed_tol
            }
            None => false,
        }
    }
}

impl Default for StopSign {
    fn default() -> Self {
        Self::new()
    }
}
