//! Whole-robot contact behavior at rest and under actuation.

use softquad::config::{ExperimentConfig, ModelPerturbation};
use softquad::sim::Simulator;

fn resting_sim() -> Simulator {
    let cfg = ExperimentConfig::default();
    Simulator::new(&cfg, &ModelPerturbation::nominal(6, 0.0), 3.0).unwrap()
}

#[test]
fn static_rest_supports_robot_weight() {
    let sim = resting_sim();
    let weight = sim.model.total_mass() * 9.81;
    let total = sim.last_report.total_normal;
    let err = (total - weight).abs() / weight;
    assert!(err < 0.02, "ΣF_n {total:.3} vs Mg {weight:.3} (err {err:.4})");
}

#[test]
fn steady_penetration_bounded_by_weight_over_stiffness() {
    let sim = resting_sim();
    let bound = 1.1 * sim.model.total_mass() * 9.81 / sim.contact.stiffness;
    for foot in &sim.last_report.feet {
        assert!(
            foot.penetration <= bound,
            "penetration {} above bound {bound}",
            foot.penetration
        );
    }
}

#[test]
fn extension_pressure_raises_body() {
    let mut sim = resting_sim();
    let z0 = sim.state.base_pos.z;
    // equal pressure on all chambers: pure extension pushes the body up
    let mut action = [0.0; 16];
    for a in action.iter_mut().take(12) {
        *a = 1.0;
    }
    for _ in 0..6 {
        sim.step_policy(&action).unwrap();
    }
    let pose = sim.body_pose();
    assert!(pose.z > z0 + 0.005, "z {} vs rest {z0}", pose.z);
    assert!(pose.roll.abs() < 0.2 && pose.pitch.abs() < 0.2);
}

#[test]
fn rest_is_stable_over_long_horizon() {
    let mut sim = resting_sim();
    let zero = [0.0; 16];
    for _ in 0..20 {
        sim.step_policy(&zero).unwrap();
    }
    let pose = sim.body_pose();
    assert!(pose.roll.abs() < 0.05 && pose.pitch.abs() < 0.05);
    assert!(sim.state.is_finite());
    assert!(pose.z > 0.1, "body collapsed to z = {}", pose.z);
}
