//! Analytic oracles for the articulated dynamics.

use approx::assert_relative_eq;
use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3, Vector6};

use softquad::config::{ExperimentConfig, ModelPerturbation};
use softquad::model::RobotModel;
use softquad::rigid_tree::{
    body_kinematics, build_tree, center_of_mass, foot_frames, linear_momentum, mechanism_energy,
    step_dynamics, step_dynamics_locked, TreeState,
};
use softquad::spatial::ForceVec;
use softquad::F;

fn nominal_model(n: usize) -> RobotModel<F> {
    ExperimentConfig::default()
        .build_robot(&ModelPerturbation::nominal(n, 0.0))
        .unwrap()
}

fn no_ext(n: usize) -> Vec<ForceVec<F>> {
    vec![ForceVec::zeros(); n + 1]
}

#[test]
fn joint_count_formula() {
    let tree = build_tree(&nominal_model(6)).unwrap();
    assert_eq!(tree.joint_count(), 4 * (18 + 1));

    let tree5 = build_tree(&nominal_model(5)).unwrap();
    assert_eq!(tree5.joint_count(), 64);
}

#[test]
fn segment_count_outside_range_rejected() {
    let cfg = ExperimentConfig::default();
    let mut pert = ModelPerturbation::nominal(6, 0.0);
    pert.n_segments = [4, 6, 6, 6];
    assert!(cfg.build_robot(&pert).is_err());
}

#[test]
fn non_spd_inertia_rejected() {
    let mut model = nominal_model(6);
    model.body_inertia = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
    assert!(build_tree(&model).is_err());
}

#[test]
fn free_fall_matches_half_g_t_squared() {
    let model = nominal_model(6);
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let mut state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, 10.0));
    let torques = DVector::zeros(n);
    let ext = no_ext(n);
    let dt = 1e-3;
    for _ in 0..500 {
        step_dynamics(&tree, &mut state, &torques, &ext, dt).unwrap();
    }
    let dz = state.base_pos.z - 10.0;
    assert_relative_eq!(dz, -0.5 * 9.81 * 0.5 * 0.5, epsilon = 1e-3);
}

#[test]
fn zero_gravity_zero_velocity_is_fixed_point() {
    let mut model = nominal_model(6);
    model.gravity = Vector3::zeros();
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let mut state = TreeState::at_rest(n, Vector3::new(0.1, -0.2, 0.3));
    let before = state.clone();
    let torques = DVector::zeros(n);
    let ext = no_ext(n);
    for _ in 0..100 {
        step_dynamics(&tree, &mut state, &torques, &ext, 1e-3).unwrap();
    }
    assert_relative_eq!(state.base_pos, before.base_pos, epsilon = 1e-12);
    assert_relative_eq!(state.q, before.q, epsilon = 1e-12);
}

/// Single-link pendulum built as a one-leg chain on a fixed base.
fn pendulum_model() -> RobotModel<F> {
    let mut model = nominal_model(5);
    for leg in &mut model.legs {
        leg.n_segments = 5;
    }
    model
}

#[test]
fn pendulum_energy_drift_below_half_percent() {
    // fixed base, single revolute joint active: start the first rx joint at
    // 90° and let it swing without damping or torque.
    let model = pendulum_model();
    let mut tree = build_tree(&model).unwrap();
    tree.fixed_base = true;
    let n = tree.joint_count();
    let mut state = TreeState::at_rest(n, Vector3::zeros());
    state.q[0] = std::f64::consts::FRAC_PI_2;

    let torques = DVector::zeros(n);
    let ext = no_ext(n);
    let dt = 1e-3;
    // zero-gravity copy of the tree isolates kinetic energy for the scale
    let mut tree_ke = tree.clone();
    tree_ke.gravity = Vector3::zeros();

    let e0 = mechanism_energy(&tree, &state);
    let mut max_drift: f64 = 0.0;
    let mut e_scale: f64 = 0.0;
    for _ in 0..10_000 {
        step_dynamics(&tree, &mut state, &torques, &ext, dt).unwrap();
        let e = mechanism_energy(&tree, &state);
        max_drift = max_drift.max((e - e0).abs());
        e_scale = e_scale.max(mechanism_energy(&tree_ke, &state));
    }
    assert!(e_scale > 0.0, "pendulum did not swing");
    assert!(
        max_drift < 0.005 * e_scale,
        "energy drift {max_drift} vs scale {e_scale}"
    );
}

#[test]
fn momentum_gains_m_g_dt_per_step_in_free_fall() {
    let model = nominal_model(7);
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let mut state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, 50.0));
    state.base_quat = UnitQuaternion::from_euler_angles(0.2, -0.1, 0.4);
    let torques = DVector::zeros(n);
    let ext = no_ext(n);
    let dt = 1e-3;
    let total_mass = model.total_mass();
    for _ in 0..200 {
        let p0 = linear_momentum(&tree, &state);
        step_dynamics(&tree, &mut state, &torques, &ext, dt).unwrap();
        let p1 = linear_momentum(&tree, &state);
        let expected = model.gravity * total_mass * dt;
        let err = ((p1 - p0) - expected).norm() / expected.norm();
        assert!(err < 1e-9, "momentum step error {err}");
    }
}

#[test]
fn rigid_limit_com_matches_single_body_oracle() {
    // all joints clamped, tumbling free fall: COM follows the ballistic
    // parabola of a single rigid body
    let model = nominal_model(6);
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let mut state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, 20.0));
    state.base_twist = Vector6::new(0.2, 0.1, -0.05, 0.2, 0.0, 0.1);
    let ext = no_ext(n);
    let dt = 1e-3;
    let com0 = center_of_mass(&tree, &state);
    let p0 = linear_momentum(&tree, &state);
    let v_com0 = p0 / model.total_mass();
    for _ in 0..1000 {
        step_dynamics_locked(&tree, &mut state, &ext, dt).unwrap();
    }
    let t = 1.0;
    let oracle = com0 + v_com0 * t + model.gravity * (0.5 * t * t);
    let com = center_of_mass(&tree, &state);
    assert!((com - oracle).norm() < 1e-3, "COM error {}", (com - oracle).norm());
}

#[test]
fn euler_angles_and_yaw_oracle() {
    let n = 76;
    let mut state = TreeState::at_rest(n, Vector3::zeros());
    let pose = body_kinematics(&state, None, 1e-3);
    assert_eq!((pose.roll, pose.pitch, pose.yaw), (0.0, 0.0, 0.0));

    let yaw = 30f64.to_radians();
    state.base_quat = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
    let pose = body_kinematics(&state, None, 1e-3);
    assert_relative_eq!(pose.yaw, 0.5236, epsilon = 1e-4);
    assert_relative_eq!(pose.roll, 0.0, epsilon = 1e-12);
    assert_relative_eq!(pose.pitch, 0.0, epsilon = 1e-12);
}

#[test]
fn inverted_body_flagged_by_fall_rule() {
    let n = 76;
    let mut state = TreeState::at_rest(n, Vector3::zeros());
    state.base_quat = UnitQuaternion::from_euler_angles(std::f64::consts::PI, 0.0, 0.0);
    let pose = body_kinematics(&state, None, 1e-3);
    assert!(pose.roll.abs() > 45f64.to_radians());
}

#[test]
fn foot_frames_against_plane() {
    let model = nominal_model(6);
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let reach = 0.12 + 0.02; // leg length + cup
    let base_z = reach + 0.03; // mount plane at body bottom face

    // feet exactly on the plane
    let state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, base_z));
    let feet = foot_frames(&tree, &state, &Vector3::zeros(), &Vector3::z());
    for f in &feet {
        assert_relative_eq!(f.d_z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.theta, 0.0, epsilon = 1e-9);
    }

    // feet 5 mm above the plane
    let state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, base_z + 0.005));
    let feet = foot_frames(&tree, &state, &Vector3::zeros(), &Vector3::z());
    for f in &feet {
        assert_relative_eq!(f.d_z, 0.005, epsilon = 1e-12);
    }

    // plane inclined 2.5°, foot axis vertical
    let g = 2.5f64.to_radians();
    let normal = Vector3::new(-g.sin(), 0.0, g.cos());
    let feet = foot_frames(&tree, &state, &Vector3::zeros(), &normal);
    for f in &feet {
        assert_relative_eq!(f.theta, g, epsilon = 1e-9);
    }
}

#[test]
fn per_joint_gains_satisfy_springs_in_series_exactly() {
    for n in [5usize, 6, 7] {
        let model = nominal_model(n);
        let tree = build_tree(&model).unwrap();
        for body in &tree.bodies {
            assert_eq!(body.n_links, n);
        }
        let leg = &model.legs[0];
        let u = softquad::pneumatics::pressure_to_force(leg, [25.0, 10.0, 5.0]);
        let g = softquad::pneumatics::gains_from_force(leg, &u);
        for i in 0..3 {
            assert_eq!(g.k_p_elem[i], n as f64 * g.k_p_tot[i]);
            assert_eq!(g.k_d_elem[i], n as f64 * g.k_d_tot[i]);
        }
    }
}

#[test]
fn step_is_deterministic() {
    let model = nominal_model(6);
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let torques = DVector::from_fn(n, |i, _| 0.01 * (i as f64).sin());
    let ext = no_ext(n);
    let run = || {
        let mut state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, 0.2));
        for _ in 0..100 {
            step_dynamics(&tree, &mut state, &torques, &ext, 2e-3).unwrap();
        }
        state
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_state_reports_joint_index() {
    let model = nominal_model(6);
    let tree = build_tree(&model).unwrap();
    let n = tree.joint_count();
    let mut state = TreeState::at_rest(n, Vector3::new(0.0, 0.0, 0.2));
    let mut torques = DVector::zeros(n);
    torques[7] = f64::INFINITY;
    let ext = no_ext(n);
    let err = step_dynamics(&tree, &mut state, &torques, &ext, 1e-3).unwrap_err();
    assert!(err.to_string().contains("non-finite"));
}
