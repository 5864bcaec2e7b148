//! Assembled robot simulator: tree dynamics + pneumatics + contact, driven
//! at the three-rate schedule (policy period → inner actuation loop →
//! physics substeps).

use thiserror::Error;

use crate::config::{ExperimentConfig, ModelPerturbation};
use crate::contact::{contact_forces, ContactParams, ContactReport, ContactState};
use crate::model::ModelError;
use crate::pneumatics::{apply_action_increment, inner_loop_step, ActionError, PneumaticState};
use crate::rigid_tree::{
    body_kinematics, build_tree, foot_frames, step_dynamics_pd, BodyPose, FootFrame, JointPd,
    SimError,
};
use crate::{RobotModel, TreeDescription, TreeState, Vec3, F};

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("settling failed: {0}")]
    Settle(#[from] StepError),
    #[error("rest pose infeasible: settled with penetration {0:.4} m")]
    RestPose(f64),
}

/// Actuation rate schedule and bounds, copied out of the config.
#[derive(Debug, Clone, Copy)]
pub struct Rates {
    pub dt_policy: F,
    pub dt_inner: F,
    pub dt_physics: F,
    pub tau_valve: F,
    pub delta_p_max: F,
    pub delta_s_max: F,
    pub p_min: F,
    pub p_max: F,
}

impl Rates {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let p = &cfg.pneumatics;
        Self {
            dt_policy: p.dt_policy,
            dt_inner: p.dt_inner,
            dt_physics: p.dt_physics,
            tau_valve: p.tau_valve,
            delta_p_max: p.delta_p_max,
            delta_s_max: p.delta_s_max,
            p_min: p.p_min,
            p_max: p.p_max,
        }
    }
}

/// One robot instance. Instances are independent; run one per worker.
pub struct Simulator {
    pub model: RobotModel,
    pub tree: TreeDescription,
    pub state: TreeState,
    pub pneu: PneumaticState<F>,
    pub rates: Rates,
    pub contact: ContactParams<F>,
    pub contact_state: ContactState<F>,
    pub suction_enabled: bool,
    /// Most recent contact report (true GRF source).
    pub last_report: ContactReport<F>,
    /// World-frame base acceleration, finite-differenced per physics step.
    pub last_accel: Vec3,
    prev_lin_vel: Vec3,
}

impl Simulator {
    pub fn contact_params(cfg: &ExperimentConfig, suction_scale: f64) -> ContactParams<F> {
        let c = &cfg.contact;
        ContactParams {
            stiffness: c.stiffness,
            damping: c.damping,
            friction: c.friction,
            cup_friction: c.cup_friction,
            tangent_stiffness: c.tangent_stiffness,
            tangent_damping: c.tangent_damping,
            f_suction_max: c.suction_f_max * suction_scale,
            d_z_max: c.suction_d_z_max,
            theta_max: c.suction_theta_max_deg.to_radians(),
            s_min: c.suction_s_min,
        }
    }

    /// Builds the robot under `pert`, places it at rest on the ground, and
    /// settles passively for `settle_time` seconds.
    pub fn new(
        cfg: &ExperimentConfig,
        pert: &ModelPerturbation,
        settle_time: F,
    ) -> Result<Self, BuildError> {
        let model = cfg.build_robot(pert)?;
        let tree = build_tree(&model)?;
        let rates = Rates::from_config(cfg);
        let contact = Self::contact_params(cfg, pert.suction_scale);

        // initial height: highest ground point under a mount, plus leg reach
        let reach = cfg.leg.length + cfg.leg.cup_length;
        let incline = pert.incline_deg.to_radians();
        let mut ground_z: F = 0.0;
        for leg in &model.legs {
            ground_z = ground_z.max(leg.mount_offset.x * incline.tan());
        }
        let base_z = ground_z + reach + cfg.body.half_extents[2] - 0.0005;
        let state = TreeState::at_rest(tree.joint_count(), Vec3::new(0.0, 0.0, base_z));

        let mut sim = Self {
            pneu: PneumaticState::new(tree.joint_count()),
            model,
            tree,
            state,
            rates,
            contact,
            contact_state: ContactState::new(),
            suction_enabled: true,
            last_report: ContactReport {
                feet: Default::default(),
                total_normal: 0.0,
            },
            last_accel: Vec3::zeros(),
            prev_lin_vel: Vec3::zeros(),
        };
        sim.settle(settle_time)?;
        Ok(sim)
    }

    /// Runs the inner/physics loops with the current commands held. The
    /// robot is held against sliding while it settles, as an operator
    /// placing it on the surface would, so episodes start from rest even
    /// on an incline.
    pub fn settle(&mut self, duration: F) -> Result<(), BuildError> {
        let ground_friction = self.contact.friction;
        self.contact.friction = ground_friction.max(1.0);
        let steps = (duration / self.rates.dt_inner).round() as usize;
        for _ in 0..steps {
            self.inner_iteration()?;
        }
        self.contact.friction = ground_friction;
        let max_pen = self
            .last_report
            .feet
            .iter()
            .map(|f| f.penetration)
            .fold(0.0, F::max);
        if max_pen > 0.05 {
            return Err(BuildError::RestPose(max_pen));
        }
        Ok(())
    }

    /// One inner-loop iteration: valve lag + setpoint, then physics substeps.
    pub fn inner_iteration(&mut self) -> Result<(), StepError> {
        let sp = inner_loop_step(
            &mut self.pneu,
            &self.model.legs,
            &self.tree,
            self.rates.dt_inner,
            self.rates.tau_valve,
        );
        let n_phys = (self.rates.dt_inner / self.rates.dt_physics).round() as usize;
        let zero_torques = nalgebra::DVector::zeros(self.tree.joint_count());
        for _ in 0..n_phys {
            let (ext, report) = contact_forces(
                &self.tree,
                &self.state,
                &mut self.contact_state,
                &self.contact,
                &self.pneu.suction,
                &self.model.body_dims,
                &self.model.ground_point,
                &self.model.ground_normal,
                self.suction_enabled,
            );
            let pd = JointPd {
                q_cmd: &sp.q_cmd,
                k_p: &sp.k_p,
                k_d: &sp.k_d,
            };
            let rot = self.state.base_quat.to_rotation_matrix();
            let lin_vel =
                rot * Vec3::new(self.state.base_twist[3], self.state.base_twist[4], self.state.base_twist[5]);
            step_dynamics_pd(
                &self.tree,
                &mut self.state,
                &pd,
                &zero_torques,
                &ext,
                self.rates.dt_physics,
            )?;
            let rot2 = self.state.base_quat.to_rotation_matrix();
            let lin_vel2 = rot2
                * Vec3::new(self.state.base_twist[3], self.state.base_twist[4], self.state.base_twist[5]);
            self.last_accel = (lin_vel2 - lin_vel) / self.rates.dt_physics;
            self.prev_lin_vel = lin_vel2;
            self.last_report = report;
        }
        Ok(())
    }

    /// Applies one 16-dim policy action and advances a full policy period.
    pub fn step_policy(&mut self, action: &[F]) -> Result<(), StepError> {
        apply_action_increment(
            &mut self.pneu,
            action,
            self.rates.delta_p_max,
            self.rates.delta_s_max,
            self.rates.p_min,
            self.rates.p_max,
        )?;
        let n_inner = (self.rates.dt_policy / self.rates.dt_inner).round() as usize;
        for _ in 0..n_inner {
            self.inner_iteration()?;
        }
        Ok(())
    }

    pub fn body_pose(&self) -> BodyPose<F> {
        let mut pose = body_kinematics(&self.state, Some(self.prev_lin_vel), self.rates.dt_physics);
        pose.lin_accel = self.last_accel;
        pose
    }

    pub fn feet(&self) -> [FootFrame<F>; 4] {
        foot_frames(
            &self.tree,
            &self.state,
            &self.model.ground_point,
            &self.model.ground_normal,
        )
    }

    /// True normal ground reaction forces per foot (N).
    pub fn true_grf(&self) -> [F; 4] {
        core::array::from_fn(|i| self.last_report.feet[i].normal_force)
    }
}
