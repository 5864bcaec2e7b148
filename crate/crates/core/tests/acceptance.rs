//! Acceptance suite: one printed pass/fail line per criterion.
//!
//! Criteria 1 through 6, 9, and 10 run in the default (fast) tier.
//! Criteria 7 and 8 need the full training schedule and are behind
//! `#[ignore]`; run them with
//! `cargo test --test acceptance -- --ignored --nocapture`.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use softquad::config::{ExperimentConfig, ModelPerturbation};
use softquad::contact::{suction_force, ContactParams};
use softquad::env::{Env, GrfSource, ACTION_DIM, FRAME_DIM, STACK_DIM};
use softquad::gait::{reference_action, GaitSchedule};
use softquad::learn::{
    ablate, behavior_clone, collect_demonstrations, evaluate_policy, load_policy,
    load_sac_checkpoint, mix_seed, sac_train, save_policy, save_sac_checkpoint,
    sign_test_p, td_target, Ablation, BcReport, GaussianPolicy, SacParams, Task, ToyReach,
};
use softquad::nn::Mlp;
use softquad::pneumatics::{gains_from_force, hysteresis_filter, pressure_to_force};
use softquad::rigid_tree::{build_tree, mechanism_energy, step_dynamics, FootFrame, TreeState};
use softquad::sim::Simulator;
use softquad::spatial::ForceVec;
use softquad::tactile::{generate_calibration_data, train_force_estimator};

fn criterion(id: &str, f: impl FnOnce() -> Result<(), String>) {
    match f() {
        Ok(()) => println!("{id}: pass"),
        Err(m) => {
            println!("{id}: fail ({m})");
            panic!("{id}: {m}");
        }
    }
}

fn require(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

/// Shared cloned policy: trained once per process on the default corpus.
fn cloned_policy() -> &'static (GaussianPolicy, BcReport) {
    static BC: OnceLock<(GaussianPolicy, BcReport)> = OnceLock::new();
    BC.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let schedule = GaitSchedule::build(&cfg.gait);
        let mut env = Env::new(cfg.clone(), GrfSource::Oracle);
        let data =
            collect_demonstrations(&mut env, &schedule, cfg.train.bc_episodes, 2025).unwrap();
        behavior_clone(&data, &cfg.train, 7).unwrap()
    })
}

/// Nominal-robot environment at a fixed inclination.
fn nominal_env(incline_deg: f64) -> Env {
    let mut cfg = ExperimentConfig::default();
    cfg.randomization.enabled = false;
    cfg.world.incline_deg = incline_deg;
    Env::new(cfg, GrfSource::Oracle)
}

/// Scripted-gait episode; returns (forward displacement m, fell).
fn reference_rollout(incline_deg: f64, suction: bool, seed: u64) -> (f64, bool) {
    let mut env = nominal_env(incline_deg);
    env.suction_enabled = suction;
    let schedule = GaitSchedule::build(&env.cfg.gait);
    env.reset(seed).unwrap();
    let x0 = env.sim.as_ref().unwrap().body_pose().x_bar;
    loop {
        let t = env.time();
        let sim = env.sim.as_ref().unwrap();
        let action = reference_action(&schedule, t, &sim.pneu, &env.cfg.pneumatics);
        let out = env.step(&action).unwrap();
        if out.terminated {
            return (out.info.pose[0] - x0, out.info.fell);
        }
    }
}

#[test]
fn criterion_1_dynamics_analytic_suite() {
    criterion("criterion 1 (dynamics analytic suite)", || {
        let start = Instant::now();
        let cfg = ExperimentConfig::default();
        let model = cfg.build_robot(&ModelPerturbation::nominal(6, 0.0)).unwrap();
        let tree = build_tree(&model).unwrap();
        let n = tree.joint_count();
        let torques = DVector::zeros(n);
        let ext = vec![ForceVec::zeros(); n + 1];

        // free fall: Δz = −½gt² after 0.5 s within 1e-3
        let mut state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, 10.0));
        for _ in 0..500 {
            step_dynamics(&tree, &mut state, &torques, &ext, 1e-3).unwrap();
        }
        let dz = state.base_pos.z - 10.0;
        let expected = -0.5 * 9.81 * 0.25;
        require(
            (dz - expected).abs() < 1e-3,
            format!("free fall Δz {dz:.6} vs {expected:.6}"),
        )?;

        // undamped pendulum swing: energy drift < 0.5% of the kinetic
        // scale over 10 s
        let mut pend = model.clone();
        for leg in &mut pend.legs {
            leg.n_segments = 5;
        }
        let mut ptree = build_tree(&pend).unwrap();
        ptree.fixed_base = true;
        let np = ptree.joint_count();
        let mut pstate = TreeState::at_rest(np, Vector3::zeros());
        pstate.q[0] = std::f64::consts::FRAC_PI_2;
        let ptorques = DVector::zeros(np);
        let pext = vec![ForceVec::zeros(); np + 1];
        let mut ke_tree = ptree.clone();
        ke_tree.gravity = Vector3::zeros();
        let e0 = mechanism_energy(&ptree, &pstate);
        let mut drift: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for _ in 0..10_000 {
            step_dynamics(&ptree, &mut pstate, &ptorques, &pext, 1e-3).unwrap();
            drift = drift.max((mechanism_energy(&ptree, &pstate) - e0).abs());
            scale = scale.max(mechanism_energy(&ke_tree, &pstate));
        }
        require(
            scale > 0.0 && drift < 0.005 * scale,
            format!("pendulum drift {drift:.3e} vs 0.5% of {scale:.3e}"),
        )?;

        // static rest: ΣF_n = Mg ± 2%
        let sim = Simulator::new(&cfg, &ModelPerturbation::nominal(6, 0.0), 3.0).unwrap();
        let weight = sim.model.total_mass() * 9.81;
        let total = sim.last_report.total_normal;
        require(
            (total - weight).abs() / weight < 0.02,
            format!("ΣF_n {total:.3} vs Mg {weight:.3}"),
        )?;
        require(
            start.elapsed().as_secs() < 60,
            format!("runtime {:?} over 1 min", start.elapsed()),
        )
    });
}

#[test]
fn criterion_2_equation_unit_suite() {
    criterion("criterion 2 (equation unit suite)", || {
        // hysteresis: expansion and contraction coefficients, exact
        let prev = DVector::from_vec(vec![10.0, 10.0]);
        let targ = DVector::from_vec(vec![20.0, 5.0]);
        let a_exp = DVector::from_element(2, 0.6);
        let a_con = DVector::from_element(2, 0.35);
        let out = hysteresis_filter(&prev, &targ, &a_exp, &a_con);
        require(
            out[0] == 10.0 + 0.6 * 10.0 && out[1] == 10.0 - 0.35 * 5.0,
            format!("hysteresis {out:?}"),
        )?;

        let cfg = ExperimentConfig::default();
        for n in [5usize, 6, 7] {
            let model = cfg.build_robot(&ModelPerturbation::nominal(n, 0.0)).unwrap();
            let leg = &model.legs[0];
            // springs in series: per-element gain is exactly n times the
            // tip gain
            let u = pressure_to_force(leg, [25.0, 10.0, 5.0]);
            let g = gains_from_force(leg, &u);
            for i in 0..3 {
                require(
                    g.k_p_elem[i] == n as f64 * g.k_p_tot[i],
                    format!("springs in series n {n} axis {i}"),
                )?;
            }
            // extension symmetry: equal chamber pressures bend nothing
            let u = pressure_to_force(leg, [20.0, 20.0, 20.0]);
            require(
                u.tau_x.abs() < 1e-12 && u.tau_y.abs() < 1e-12 && u.f_z > 0.0,
                format!("extension symmetry n {n}"),
            )?;
        }

        // suction gate truth table, all 8 cases
        let p = ContactParams {
            stiffness: 5000.0,
            damping: 30.0,
            friction: 0.04,
            cup_friction: 1.0,
            tangent_stiffness: 2000.0,
            tangent_damping: 10.0,
            f_suction_max: 15.0,
            d_z_max: 0.005,
            theta_max: 10f64.to_radians(),
            s_min: 0.5,
        };
        for mask in 0..8u8 {
            let d_ok = mask & 1 != 0;
            let th_ok = mask & 2 != 0;
            let s_ok = mask & 4 != 0;
            let foot = FootFrame {
                rim_pos: Vector3::zeros(),
                rim_vel: Vector3::zeros(),
                axis: Vector3::z(),
                d_z: if d_ok { 0.001 } else { 0.02 },
                theta: if th_ok { 0.05 } else { 0.5 },
            };
            let s = if s_ok { 0.8 } else { 0.2 };
            let (f, engaged) = suction_force(&foot, s, &p, &Vector3::z());
            let expect = d_ok && th_ok && s_ok;
            require(engaged == expect, format!("truth table mask {mask}"))?;
            let expect_f = if expect { -0.8 * 15.0 } else { 0.0 };
            require(f.z == expect_f, format!("suction magnitude mask {mask}"))?;
        }
        Ok(())
    });
}

/// Max relative error between reverse-mode and central-difference
/// gradients over a strided sample of parameters.
fn grad_check(widths: &[usize], seed: u64, batch: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mlp: Mlp<f64> = Mlp::new(widths, &mut rng).unwrap();
    for l in &mut mlp.layers {
        for b in l.bias.iter_mut() {
            *b = 0.05;
        }
    }
    let x = DMatrix::from_fn(widths[0], batch, |r, c| {
        ((r * 31 + c * 17) as f64 * 0.173).sin()
    });
    let y = DMatrix::from_fn(*widths.last().unwrap(), batch, |r, c| {
        ((r * 13 + c * 7) as f64 * 0.311).cos()
    });
    let loss = |m: &Mlp<f64>| 0.5 * (m.forward(&x).unwrap() - &y).norm_squared();
    let (out, tape) = mlp.forward_cached(&x).unwrap();
    let grads = mlp.backward(&tape, &(out - &y)).unwrap().0;

    let h = 1e-6;
    let mut max_rel: f64 = 0.0;
    for l in 0..mlp.layers.len() {
        let n = mlp.layers[l].weight.len();
        let stride = (n / 25).max(1);
        for i in (0..n).step_by(stride) {
            let orig = mlp.layers[l].weight[i];
            mlp.layers[l].weight[i] = orig + h;
            let plus = loss(&mlp);
            mlp.layers[l].weight[i] = orig - h;
            let minus = loss(&mlp);
            mlp.layers[l].weight[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let g = grads.weights[l][i];
            max_rel = max_rel.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-3));
        }
    }
    max_rel
}

#[test]
fn criterion_3_gradient_checks() {
    criterion("criterion 3 (autodiff gradient checks)", || {
        let start = Instant::now();
        for (widths, seed) in [
            (vec![3usize, 32, 32, 1], 101u64),
            (vec![136, 256, 256, 16], 102),
            (vec![152, 256, 256, 1], 103),
        ] {
            let err = grad_check(&widths, seed, 4);
            require(
                err < 1e-4,
                format!("shape {widths:?}: max relative error {err:.2e}"),
            )?;
        }
        require(
            start.elapsed().as_secs() < 60,
            format!("runtime {:?} over 1 min", start.elapsed()),
        )
    });
}

#[test]
fn criterion_4_tactile_pipeline() {
    criterion("criterion 4 (tactile pipeline)", || {
        let start = Instant::now();
        let cfg = ExperimentConfig::default().tactile;
        let data = generate_calibration_data(&cfg, 2024);
        require(
            data.n_cycles >= 420,
            format!("{} press cycles below 420", data.n_cycles),
        )?;
        let (_est, report) = train_force_estimator(&data, cfg.epochs, 7).unwrap();
        require(
            report.rmse < 0.05 * report.force_range,
            format!(
                "held-out RMSE {:.4} N not below 5% of range {:.1} N",
                report.rmse, report.force_range
            ),
        )?;
        require(
            report.rmse < report.linear_rmse,
            format!(
                "RMSE {:.4} not below linear baseline {:.4}",
                report.rmse, report.linear_rmse
            ),
        )?;
        require(
            start.elapsed().as_secs() < 300,
            format!("runtime {:?} over 5 min", start.elapsed()),
        )
    });
}

#[test]
fn criterion_5_sac_correctness() {
    criterion("criterion 5 (soft actor-critic correctness)", || {
        let start = Instant::now();
        // two-state deterministic MDP: critic target matches the
        // value-iteration fixed point within 1e-6
        let gamma = 0.9;
        let reward = [1.0, 2.0];
        let next = [1usize, 1];
        let mut v = [0.0f64; 2];
        for _ in 0..2000 {
            let prev = v;
            for s in 0..2 {
                v[s] = reward[s] + gamma * prev[next[s]];
            }
        }
        for s in 0..2 {
            let target = td_target(reward[s], 1.0, gamma, v[next[s]], 0.0, 0.0);
            require(
                (target - v[s]).abs() < 1e-6,
                format!("state {s}: target {target} vs value {}", v[s]),
            )?;
        }

        // toy 1-DOF reach: ≥ 90% of the analytic optimum on 3/3 seeds
        // within the 50k-step budget (600 episodes × 50 steps = 30k)
        let params = SacParams {
            hidden: vec![32, 32],
            gamma: 0.99,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 50_000,
            warmup_episodes: 10,
            critic_lr_start: 1e-3,
            critic_lr_end: 3e-4,
            actor_lr: 3e-4,
            alpha_lr: 3e-4,
            entropy_target: -1.0,
            updates_per_step: 1,
        };
        let mut task = ToyReach::new();
        let optimal = ToyReach::new().optimal_return();
        for seed in [1u64, 2, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut policy = GaussianPolicy::new(1, &params.hidden, 1, -1.0, &mut rng).unwrap();
            sac_train(&mut task, &mut policy, &params, 600, seed).unwrap();
            let mut obs = task.reset(0).unwrap();
            let mut ret = 0.0;
            loop {
                let a = policy.mean_action(&obs).unwrap();
                let (nx, r, done, _) = task.step(a.as_slice()).unwrap();
                ret += r;
                obs = nx;
                if done {
                    break;
                }
            }
            require(
                ret >= 0.9 * optimal,
                format!("seed {seed}: return {ret:.2} below 90% of {optimal:.2}"),
            )?;
        }
        require(
            start.elapsed().as_secs() < 600,
            format!("runtime {:?} over 10 min", start.elapsed()),
        )
    });
}

#[test]
fn criterion_6_behavior_cloning_viability() {
    criterion("criterion 6 (behavior cloning viability)", || {
        let start = Instant::now();
        let (policy, report) = cloned_policy();
        require(
            report.holdout_mse < 0.01,
            format!("held-out MSE {:.2e} not below 0.01", report.holdout_mse),
        )?;

        let (ref_dx, ref_fell) = reference_rollout(0.0, true, 9);
        require(
            ref_dx > 0.05 && !ref_fell,
            format!("reference gait stalled: {ref_dx:.3} m, fell {ref_fell}"),
        )?;

        let mut env = nominal_env(0.0);
        let metrics = evaluate_policy(&mut env, policy, &[11], Ablation::None).unwrap();
        let bc_dx = metrics.episodes[0].displacement;
        require(
            bc_dx >= 0.5 * ref_dx,
            format!("cloned displacement {bc_dx:.3} m below half of {ref_dx:.3} m"),
        )?;
        require(
            start.elapsed().as_secs() < 900,
            format!("runtime {:?} over 15 min", start.elapsed()),
        )
    });
}

#[test]
fn criterion_9_ablation_directions() {
    criterion("criterion 9 (ablation directions)", || {
        // noise-replaced IMU+GRF: paired episodes, one-sided sign test
        let (policy, _) = cloned_policy();
        let base_seeds = [1u64, 2, 3, 4, 5, 11, 12, 13, 14, 15];
        let seeds: Vec<u64> = base_seeds
            .iter()
            .flat_map(|&s| (0..2u64).map(move |i| mix_seed(s, i)))
            .collect();
        let mut env = nominal_env(0.0);
        let (intact, ablated) = ablate(&mut env, policy, Ablation::ImuGrfNoise, &seeds).unwrap();
        let mut wins = 0;
        let mut ties = 0;
        for (a, b) in intact.episodes.iter().zip(&ablated.episodes) {
            if a.speed > b.speed {
                wins += 1;
            } else if a.speed == b.speed {
                ties += 1;
            }
        }
        let n = seeds.len() - ties;
        let p = sign_test_p(wins, n);
        require(
            intact.mean_speed > ablated.mean_speed && p < 0.05,
            format!(
                "IMU+GRF noise: intact {:.4} vs ablated {:.4} m/s, {wins}/{n} wins, p {p:.4}",
                intact.mean_speed, ablated.mean_speed
            ),
        )?;

        // suction disabled: scripted-gait speed collapses below 25% of
        // the intact baseline on flat and 2.5° ground
        for incline in [0.0, 2.5] {
            let (on, _) = reference_rollout(incline, true, 3);
            let (off, _) = reference_rollout(incline, false, 3);
            require(
                on > 0.0 && off < 0.25 * on,
                format!("suction off at {incline}°: {off:.4} m vs intact {on:.4} m"),
            )?;
        }
        Ok(())
    });
}

#[test]
fn criterion_10_structural_invariants() {
    criterion("criterion 10 (structural invariants)", || {
        require(
            FRAME_DIM == 34 && STACK_DIM == 136 && ACTION_DIM == 16,
            format!("dims {FRAME_DIM}/{STACK_DIM}/{ACTION_DIM}"),
        )?;
        let mut env = nominal_env(0.0);
        let obs = env.reset(42).unwrap();
        require(
            obs.stack[3 * FRAME_DIM..] == obs.frame,
            "newest frame not the stack tail".into(),
        )?;
        let action = [0.1; ACTION_DIM];
        for _ in 0..5 {
            let out = env.step(&action).unwrap();
            require(
                out.observation.frame.len() == FRAME_DIM
                    && out.observation.stack.len() == STACK_DIM
                    && out.observation.stack[3 * FRAME_DIM..] == out.observation.frame,
                "frame/stack layout broken mid-episode".into(),
            )?;
        }
        require(
            env.step(&[0.0; 7]).is_err(),
            "wrong action width accepted".into(),
        )?;

        // reset determinism: bit-exact observations and step results
        let mut env_a = nominal_env(0.0);
        let mut env_b = nominal_env(0.0);
        let oa = env_a.reset(7).unwrap();
        let ob = env_b.reset(7).unwrap();
        require(oa.stack == ob.stack, "reset not bit-exact".into())?;
        for k in 0..5 {
            let a = env_a.step(&action).unwrap();
            let b = env_b.step(&action).unwrap();
            require(
                a.reward == b.reward && a.observation.stack == b.observation.stack,
                format!("step {k} diverged across identical resets"),
            )?;
        }

        // checkpoint round trip: bit-exact policy and trainer state
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = GaussianPolicy::new(STACK_DIM, &[32], ACTION_DIM, -1.0, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        save_policy(&policy, &path).unwrap();
        let back = load_policy(&path).unwrap();
        let probe = DVector::from_fn(STACK_DIM, |i, _| (i as f64 * 0.37).sin());
        require(
            policy.mean_action(&probe).unwrap() == back.mean_action(&probe).unwrap(),
            "policy round trip not bit-exact".into(),
        )?;
        let q: Mlp<f64> = Mlp::new(&[STACK_DIM + ACTION_DIM, 16, 1], &mut rng).unwrap();
        let ck = dir.path().join("trainer.bin");
        save_sac_checkpoint(&policy, &q, &q, -0.5, 123, &[1.0, -2.0], &ck).unwrap();
        let (p2, init, returns) = load_sac_checkpoint(&ck).unwrap();
        require(
            p2.mean_action(&probe).unwrap() == policy.mean_action(&probe).unwrap()
                && init.log_alpha == -0.5
                && init.start_episode == 123
                && returns == vec![1.0, -2.0],
            "trainer checkpoint round trip not bit-exact".into(),
        )
    });
}

/// Full desk-scale schedule: behavior cloning, 400 flat episodes, then
/// 200 mixed-incline episodes, three seeds. Prints the criterion 7 and 8
/// lines. Hours of runtime.
#[test]
#[ignore]
fn criteria_7_and_8_training_schedule_slow() {
    let cfg = ExperimentConfig::default();
    let (bc, _) = cloned_policy();
    let eval_seeds: Vec<u64> = (0..5u64).map(|i| mix_seed(77, i)).collect();

    let mut env = nominal_env(0.0);
    let bc_speed = evaluate_policy(&mut env, bc, &eval_seeds, Ablation::None)
        .unwrap()
        .mean_speed;
    eprintln!("cloned policy flat speed {bc_speed:.4} m/s");

    let params = SacParams::from_config(&cfg.train, ACTION_DIM);
    let mut incline_cfg = cfg.clone();
    incline_cfg.randomization.inclines_deg = vec![0.0, 2.5, 5.0];

    let mut flat_speeds = Vec::new();
    let mut curve_ok = Vec::new();
    let mut refined = Vec::new();
    for &seed in &cfg.train.seeds {
        let mut policy = bc.clone();
        let mut train_env = Env::new(cfg.clone(), GrfSource::Oracle);
        let run = sac_train(
            &mut train_env,
            &mut policy,
            &params,
            cfg.train.episodes_flat,
            seed,
        )
        .unwrap();
        let r = &run.episode_returns;
        let w = params.warmup_episodes;
        let warmup_end: f64 = r[w - 50..w].iter().sum::<f64>() / 50.0;
        let final_mean: f64 = r[r.len() - 50..].iter().sum::<f64>() / 50.0;
        curve_ok.push(final_mean > warmup_end);
        eprintln!(
            "seed {seed}: flat run done, smoothed return {warmup_end:.2} -> {final_mean:.2}"
        );

        let mut env = nominal_env(0.0);
        let speed = evaluate_policy(&mut env, &policy, &eval_seeds, Ablation::None)
            .unwrap()
            .mean_speed;
        eprintln!("seed {seed}: flat speed {speed:.4} m/s");
        flat_speeds.push(speed);

        let mut incline_env = Env::new(incline_cfg.clone(), GrfSource::Oracle);
        sac_train(
            &mut incline_env,
            &mut policy,
            &params,
            cfg.train.episodes_incline,
            mix_seed(seed, 0x1CC),
        )
        .unwrap();
        refined.push(policy);
    }

    criterion("criterion 7 (reinforcement learning improvement)", || {
        let rl_speed = flat_speeds.iter().sum::<f64>() / flat_speeds.len() as f64;
        require(
            rl_speed >= 1.3 * bc_speed,
            format!("RL {rl_speed:.4} m/s vs 1.3x cloned {bc_speed:.4} m/s"),
        )?;
        require(
            curve_ok.iter().all(|&b| b),
            format!("reward curve shape flags {curve_ok:?}"),
        )
    });

    criterion("criterion 8 (incline generalization)", || {
        for incline in [0.0, 2.5, 5.0] {
            let mut speeds = Vec::new();
            let mut falls = 0usize;
            let mut total = 0usize;
            for policy in &refined {
                let mut env = nominal_env(incline);
                let m = evaluate_policy(&mut env, policy, &eval_seeds, Ablation::None).unwrap();
                speeds.push(m.mean_speed);
                falls += m.episodes.iter().filter(|e| e.fell).count();
                total += m.episodes.len();
            }
            let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
            let fall_rate = falls as f64 / total as f64;
            eprintln!("incline {incline}°: mean speed {mean:.4} m/s, fall rate {fall_rate:.2}");
            require(
                mean > 0.0,
                format!("mean speed {mean:.4} m/s not positive at {incline}°"),
            )?;
            require(
                fall_rate < 0.2,
                format!("fall rate {fall_rate:.2} at {incline}° above 20%"),
            )?;
        }
        Ok(())
    });
}
