use approx::assert_abs_diff_eq;
use smallvec::SmallVec;

use super::*;
use crate::pdsl::check_dimensions;
use crate::seeds::rng_for;

fn ss_state(env: &Env, v: f64, dstop: f64) -> State {
    let e = match env {
        Env::StopSign(e) => e,
        _ => unreachable!(),
    };
    State::new(
        env.signature().clone(),
        SmallVec::from_slice(&[v, 10.0, e.a_min, e.a_max, e.a_dec, dstop]),
    )
    .unwrap()
}

#[test]
fn ss_step_rest_stays_at_rest() {
    let env = Env::stop_sign();
    let s = ss_state(&env, 0.0, 50.0);
    let next = env.step(&s, &[0.0]);
    assert_eq!(next.get("v"), Some(0.0));
    assert_eq!(next.get("dstop"), Some(50.0));
}

#[test]
fn ss_step_euler_update() {
    let env = Env::stop_sign();
    let s = ss_state(&env, 10.0, 50.0);
    let next = env.step(&s, &[2.0]);
    assert_abs_diff_eq!(next.get("v").unwrap(), 10.2, epsilon = 1e-12);
    // Position advances by v*dt = 1.0, so the remaining distance shrinks.
    assert_abs_diff_eq!(next.get("dstop").unwrap(), 49.0, epsilon = 1e-12);
}

#[test]
fn ss_step_clamps_speed_at_zero() {
    let env = Env::stop_sign();
    let s = ss_state(&env, 0.5, 50.0);
    let next = env.step(&s, &[-20.0]);
    assert_eq!(next.get("v"), Some(0.0));
}

#[test]
fn obs_log_density_closed_form() {
    let env = Env::stop_sign();
    let model = env.observation_model();
    let s = ss_state(&env, 10.0, 50.0);
    let con = env.signature().actions.label("CON").unwrap();

    // Peak of a sigma = 0.5 Gaussian: -ln(0.5 * sqrt(2*pi)) = -0.225791...
    let peak = model.log_density(&[0.0], con, &s);
    assert_abs_diff_eq!(peak, -(0.5f64 * (2.0 * std::f64::consts::PI).sqrt()).ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(peak, -0.225_791_352_644_727_45, epsilon = 1e-12);

    // One sigma from the mean costs exactly 0.5 nats.
    let one_sigma = model.log_density(&[0.5], con, &s);
    assert_abs_diff_eq!(one_sigma, peak - 0.5, epsilon = 1e-12);

    // Density is maximized at the mean.
    for dz in [-1.0, -0.1, 0.1, 1.0] {
        assert!(model.log_density(&[dz], con, &s) < peak);
    }
}

#[test]
fn obs_log_density_sums_over_channels() {
    let env = Env::merge_lite();
    let model = env.observation_model();
    let mut rng = rng_for(3, &[1]);
    let s = env.init_state(&mut rng);
    let con = env.signature().actions.label("CON").unwrap();
    let total = model.log_density(&[0.3, -0.1], con, &s);

    let ch0 = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5f64.ln() - 0.5 * (0.3f64 / 0.5).powi(2);
    let ch1 = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.15f64.ln() - 0.5 * (0.1f64 / 0.15).powi(2);
    assert_abs_diff_eq!(total, ch0 + ch1, epsilon = 1e-12);
}

#[test]
fn ss_gt_policy_structure_and_dimensions() {
    let env = Env::stop_sign();
    let gt = env.gt_policy();
    let sig = env.signature();
    let text = crate::pdsl::serialize_policy(&gt);
    assert!(text.contains("if (flp(lgs(v - vmax, -0.4, 1.3)) and a == ACC) then CON"));
    assert!(text.contains("if (flp(lgs(distTrv(v, adec) - dstop, 2.8, 0.8)) and a == CON) then DEC"));
    for rule in gt.rules() {
        rule.guard.validate(sig).unwrap();
        for leaf in rule.guard.leaves() {
            if let crate::pdsl::ProbExpr::Logistic { feature, .. } = leaf {
                check_dimensions(feature, sig).unwrap();
            }
        }
    }
}

#[test]
fn ss_per_action_means_are_pairwise_distinct() {
    let env = Env::stop_sign();
    let model = env.observation_model();
    let sig = env.signature();
    let labels: Vec<_> = sig.actions.labels().collect();
    let mut rng = rng_for(11, &[7]);
    for _ in 0..200 {
        let mut s = env.init_state(&mut rng);
        let vi = sig.var_index("v").unwrap();
        let di = sig.var_index("dstop").unwrap();
        s.set_index(vi, rng.random_range(0.0..14.0));
        s.set_index(di, rng.random_range(-5.0..80.0));
        let means: Vec<f64> = labels.iter().map(|a| model.mean(*a, &s)[0]).collect();
        assert!(means[0] > 0.0, "ACC mean positive");
        assert_eq!(means[1], 0.0, "CON mean zero");
        assert!(means[2] < 0.0, "DEC mean negative, got {}", means[2]);
    }
}

#[test]
fn noiseless_demos_emit_exact_means() {
    let env = Env::stop_sign();
    let model = env.observation_model();
    let gt = env.gt_policy();
    let demos =
        generate_demos(&env, &gt, &model, 3, 50, &[0.0], Split::Train, 99).unwrap();
    for demo in &demos.demos {
        let actions = demo.gt_actions.as_ref().unwrap();
        for t in 0..demo.len() {
            let mu = model.mean(actions[t], &demo.states[t]);
            assert_eq!(demo.obs[t][0], mu[0]);
        }
    }
}

#[test]
fn demo_generation_is_deterministic() {
    let env = Env::stop_sign();
    let model = env.observation_model();
    let gt = env.gt_policy();
    let sigma = env.scaled_sigma_act(1.0);
    let a = generate_demos(&env, &gt, &model, 5, 60, &sigma, Split::Train, 7).unwrap();
    let b = generate_demos(&env, &gt, &model, 5, 60, &sigma, Split::Train, 7).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());

    let c = generate_demos(&env, &gt, &model, 5, 60, &sigma, Split::Train, 8).unwrap();
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
}

#[test]
fn ss_gt_demos_rise_plateau_and_stop() {
    let env = Env::stop_sign();
    let model = env.observation_model();
    let gt = env.gt_policy();
    let sigma = env.scaled_sigma_act(1.0);
    let demos = generate_demos(
        &env,
        &gt,
        &model,
        10,
        env.default_horizon(),
        &sigma,
        Split::Train,
        42,
    )
    .unwrap();

    let mut successes = 0;
    for demo in &demos.demos {
        let vmax = demo.states[0].get("vmax").unwrap();
        let peak = demo.states.iter().map(|s| s.get("v").unwrap()).fold(0.0, f64::max);
        // The switch hazard accumulates per step, so the plateau sits below
        // vmax, with an early tail: that spread is the transition noise the
        // demonstrations are supposed to carry.
        assert!(
            peak >= vmax - 4.5 && peak <= vmax + 1.0,
            "peak speed {peak} should plateau near vmax {vmax}"
        );
        assert!(peak >= 5.0, "demo never got moving: peak {peak}");
        if env.task_success(demo) {
            successes += 1;
        }
    }
    assert!(successes >= 9, "only {successes}/10 noisy GT demos stopped at the sign");
}

#[test]
fn ss_task_success_thresholds() {
    let env = Env::stop_sign();
    let mk = |v: f64, dstop: f64| Trajectory {
        states: vec![ss_state(&env, v, dstop)],
        obs: vec![vec![0.0]],
        gt_actions: None,
        seed: 0,
    };
    assert!(env.task_success(&mk(0.1, 0.3)));
    assert!(!env.task_success(&mk(5.0, 0.3)));
    assert!(!env.task_success(&mk(0.1, 4.0)));
    assert!(env.task_success(&mk(0.1, -1.5)));
}

#[test]
fn gt_policy_success_rate_ss() {
    let env = Env::stop_sign();
    let model = env.observation_model();
    let gt = env.gt_policy();
    let sigma = env.scaled_sigma_act(1.0);
    let mut successes = 0;
    for i in 0..100 {
        let mut rng = rng_for(1234, &[i]);
        let traj =
            rollout(&env, &gt, &model, env.default_horizon(), &sigma, &mut rng).unwrap();
        if env.task_success(&traj) {
            successes += 1;
        }
    }
    assert!(successes >= 90, "SS GT policy succeeded only {successes}/100 times");
}

#[test]
fn gt_policy_success_rate_mg() {
    let env = Env::merge_lite();
    let model = env.observation_model();
    let gt = env.gt_policy();
    let sigma = env.scaled_sigma_act(1.0);
    let mut successes = 0;
    for i in 0..100 {
        let mut rng = rng_for(4321, &[i]);
        let traj =
            rollout(&env, &gt, &model, env.default_horizon(), &sigma, &mut rng).unwrap();
        if env.task_success(&traj) {
            successes += 1;
        }
    }
    assert!(successes >= 90, "MG GT policy succeeded only {successes}/100 times");
}

#[test]
fn mg_lane_change_hands_off_neighbors() {
    let env = Env::merge_lite();
    let sig = env.signature().clone();
    // Ego in lane 0 at x=10, traffic ahead at 40 (lane 0 grid 60), right-lane
    // pair at 5 and 30 (grid 25).
    let s = State::new(sig, SmallVec::from_slice(&[10.0, 10.0, 0.0, 40.0, 30.0, 5.0])).unwrap();

    // No lane change: everything advances by v_traffic*dt = 0.5.
    let stay = env.step(&s, &[0.0, 0.0]);
    assert_abs_diff_eq!(stay.get("x").unwrap(), 11.0, epsilon = 1e-12);
    assert_abs_diff_eq!(stay.get("fx").unwrap(), 40.5, epsilon = 1e-12);
    assert_abs_diff_eq!(stay.get("rbx").unwrap(), 5.5, epsilon = 1e-12);
    assert_abs_diff_eq!(stay.get("rfx").unwrap(), 30.5, epsilon = 1e-12);

    // Lane change: the old right lane becomes the ego lane and the empty
    // lane 2 shows sentinel neighbors.
    let moved = env.step(&s, &[0.0, 1.0]);
    assert_eq!(moved.get("lane"), Some(1.0));
    assert_abs_diff_eq!(moved.get("fx").unwrap(), 30.5, epsilon = 1e-12);
    assert!(moved.get("rfx").unwrap() > 500.0);
    assert!(moved.get("rbx").unwrap() < -500.0);

    // A second change reaches the empty lane: sentinels ahead too.
    let top = env.step(&moved, &[0.0, 1.0]);
    assert_eq!(top.get("lane"), Some(2.0));
    assert!(top.get("fx").unwrap() > 500.0);
}

#[test]
fn mg_overtaken_front_vehicle_wraps_to_next() {
    let env = Env::merge_lite();
    let sig = env.signature().clone();
    // Ego almost on top of the front vehicle; one step passes it.
    let s = State::new(sig, SmallVec::from_slice(&[10.0, 10.0, 0.0, 11.2, 30.0, 5.0])).unwrap();
    let next = env.step(&s, &[0.0, 0.0]);
    // fx advanced to 11.7, ego to 11.0: still ahead, same vehicle.
    assert_abs_diff_eq!(next.get("fx").unwrap(), 11.7, epsilon = 1e-12);
    // After several steps the ego passes it and the next grid vehicle
    // becomes the neighbor, one gap0 further on.
    let mut s = next;
    for _ in 0..5 {
        s = env.step(&s, &[0.0, 0.0]);
    }
    let front = s.get("fx").unwrap() - s.get("x").unwrap();
    assert!(front > 50.0, "front gap should wrap to the next convoy vehicle, got {front}");
}

#[test]
fn mg_collision_flag() {
    let env = Env::merge_lite();
    let m = match &env {
        Env::Merge(m) => m,
        _ => unreachable!(),
    };
    let sig = env.signature().clone();
    let near = State::new(sig.clone(), SmallVec::from_slice(&[10.0, 10.0, 0.0, 11.0, 30.0, 5.0]))
        .unwrap();
    assert!(m.collided(&near));
    let safe = State::new(sig.clone(), SmallVec::from_slice(&[10.0, 10.0, 0.0, 20.0, 30.0, 5.0]))
        .unwrap();
    assert!(!m.collided(&safe));
    let lane2 = State::new(sig, SmallVec::from_slice(&[10.0, 10.0, 2.0, 11.0, 30.0, 5.0])).unwrap();
    assert!(!m.collided(&lane2));
}

#[test]
fn demo_set_json_round_trip() {
    let env = Env::merge_lite();
    let model = env.observation_model();
    let gt = env.gt_policy();
    let sigma = env.scaled_sigma_act(1.0);
    let demos = generate_demos(&env, &gt, &model, 3, 40, &sigma, Split::Test, 5).unwrap();
    let json = demos.to_json().unwrap();
    let back = DemoSet::from_json(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
    assert_eq!(back.split, Split::Test);
    assert_eq!(back.demos.len(), 3);
    assert_eq!(back.demos[0].gt_actions, demos.demos[0].gt_actions);
    for (a, b) in back.demos[1].states.iter().zip(&demos.demos[1].states) {
        assert_eq!(a.values(), b.values());
    }
}

#[test]
fn unknown_env_lists_available() {
    match Env::by_name("pp") {
        Err(EnvError::UnknownEnv { available, .. }) => {
            assert!(available.contains("ss") && available.contains("mg"));
        }
        other => panic!("expected UnknownEnv, got {:?}", other.map(|e| e.name())),
    }
}
