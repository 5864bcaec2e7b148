//! Experiment configuration: one nested key/value (TOML) file covering the
//! robot constants, actuation rates, contact/suction parameters, tactile
//! sensor model, gait, environment, and training schedule.
//!
//! Every field has a committed default, so a missing section falls back to
//! the nominal desk-scale robot.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LegModel, ModelError, PerJointType, RobotModel};
use crate::F;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid robot model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyConfig {
    /// Central body mass (kg).
    pub mass: f64,
    /// Diagonal inertia about the COM (kg·m²).
    pub inertia_diag: [f64; 3],
    /// Box half-extents (m).
    pub half_extents: [f64; 3],
    /// Leg mount inset from the body corners (m).
    pub mount_inset: f64,
    /// Target body height above ground (m).
    pub z_ref: f64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia_diag: [0.004, 0.006, 0.008],
            half_extents: [0.12, 0.09, 0.03],
            mount_inset: 0.02,
            z_ref: 0.165,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LegConfig {
    /// Nominal segment count per leg.
    pub n_segments: usize,
    /// Natural chain length excluding the cup (m).
    pub length: f64,
    /// Total leg mass, split equally over segments (kg).
    pub mass: f64,
    pub cup_mass: f64,
    pub cup_length: f64,
    /// Chamber moment arm (m).
    pub chamber_radius: f64,
    /// Chamber cross-section (m²).
    pub chamber_area: f64,
    /// Total base stiffness per joint type: revolute (N·m/rad),
    /// prismatic and suction (N/m).
    pub stiffness_revolute: f64,
    pub stiffness_prismatic: f64,
    pub stiffness_suction: f64,
    pub damping_revolute: f64,
    pub damping_prismatic: f64,
    pub damping_suction: f64,
    /// Eq-style actuation-dependent gain growth coefficients.
    pub stiffness_gain: f64,
    pub damping_gain: f64,
    /// Hysteresis coefficients (expansion / contraction), shared across
    /// joint types at nominal.
    pub alpha_exp: f64,
    pub alpha_con: f64,
}

impl Default for LegConfig {
    fn default() -> Self {
        Self {
            n_segments: 6,
            length: 0.12,
            mass: 0.15,
            cup_mass: 0.05,
            cup_length: 0.02,
            chamber_radius: 0.015,
            chamber_area: 1.0e-4,
            stiffness_revolute: 1.7,
            stiffness_prismatic: 2000.0,
            stiffness_suction: 2500.0,
            damping_revolute: 0.05,
            damping_prismatic: 40.0,
            damping_suction: 60.0,
            stiffness_gain: 0.5,
            damping_gain: 0.02,
            alpha_exp: 0.35,
            alpha_con: 0.15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Gravitational acceleration magnitude (m/s²), pointing along −z.
    pub gravity: f64,
    /// Ground incline about the y axis (deg); travel is uphill along +x.
    pub incline_deg: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            incline_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PneumaticsConfig {
    /// Pressure bounds (kPa).
    pub p_min: f64,
    pub p_max: f64,
    /// Largest per-policy-step pressure increment (kPa).
    pub delta_p_max: f64,
    /// Largest per-policy-step suction increment.
    pub delta_s_max: f64,
    /// First-order valve lag time constant (s).
    pub tau_valve: f64,
    /// Policy command period (s).
    pub dt_policy: f64,
    /// Inner actuation loop period (s).
    pub dt_inner: f64,
    /// Physics integration step (s).
    pub dt_physics: f64,
}

impl Default for PneumaticsConfig {
    fn default() -> Self {
        Self {
            p_min: 0.0,
            p_max: 50.0,
            delta_p_max: 10.0,
            delta_s_max: 0.5,
            tau_valve: 0.08,
            dt_policy: 0.5,
            dt_inner: 0.02,
            dt_physics: 0.002,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactSuctionConfig {
    /// Penalty stiffness (N/m) and damping (N·s/m).
    pub stiffness: f64,
    pub damping: f64,
    /// Coulomb friction coefficient against the ground surface.
    pub friction: f64,
    /// Friction coefficient of an engaged suction-cup seal.
    pub cup_friction: f64,
    /// Stick-anchor tangential stiffness (N/m) and damping (N·s/m).
    pub tangent_stiffness: f64,
    pub tangent_damping: f64,
    /// Maximum suction force (N).
    pub suction_f_max: f64,
    /// Engagement gates: rim distance (m), alignment (deg), command level.
    pub suction_d_z_max: f64,
    pub suction_theta_max_deg: f64,
    pub suction_s_min: f64,
}

impl Default for ContactSuctionConfig {
    fn default() -> Self {
        Self {
            stiffness: 5000.0,
            damping: 30.0,
            friction: 0.04,
            cup_friction: 1.0,
            tangent_stiffness: 2000.0,
            tangent_damping: 10.0,
            suction_f_max: 15.0,
            suction_d_z_max: 0.005,
            suction_theta_max_deg: 10.0,
            suction_s_min: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TactileConfig {
    /// Rest magnet-sensor gap (m).
    pub gap: f64,
    /// Axial field at the rest gap (mT).
    pub rest_field: f64,
    /// Cup compression stiffness seen by the magnets (N/m).
    pub cup_stiffness: f64,
    /// Gaussian reading noise (mT).
    pub noise_std: f64,
    /// Reading hysteresis coefficients (load / unload).
    pub alpha_load: f64,
    pub alpha_unload: f64,
    /// Drift rate under sustained load (mT/s).
    pub drift_rate: f64,
    /// Calibration protocol.
    pub press_cycles: usize,
    /// Press velocities (m/s).
    pub velocities: Vec<f64>,
    /// Fraction of partial-contact cycles.
    pub partial_fraction: f64,
    /// Peak force range (N).
    pub force_min: f64,
    pub force_max: f64,
    /// Held-out validation fraction.
    pub holdout_fraction: f64,
    /// Estimator training epochs.
    pub epochs: usize,
}

impl Default for TactileConfig {
    fn default() -> Self {
        Self {
            gap: 0.008,
            rest_field: 40.0,
            cup_stiffness: 6000.0,
            noise_std: 0.15,
            alpha_load: 0.6,
            alpha_unload: 0.35,
            drift_rate: 0.02,
            press_cycles: 420,
            velocities: vec![0.005, 0.02],
            partial_fraction: 0.4,
            force_min: 0.0,
            force_max: 12.0,
            holdout_fraction: 0.2,
            epochs: 300,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitConfig {
    /// Gait cycle period (s).
    pub period: f64,
    /// Stand-up window before the cycle starts (s): all legs pressurize
    /// and anchor so the first swing happens from a stable stance.
    pub prep_time: f64,
    /// Chamber pressure holding a standing leg (kPa).
    pub p_stand: f64,
    /// Extra stance extension while pushing (kPa).
    pub p_push: f64,
    /// Differential bend pressure for swing (kPa).
    pub p_bend: f64,
    /// Suction command for stance / swing.
    pub s_stance: f64,
    pub s_swing: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            period: 16.0,
            prep_time: 4.0,
            p_stand: 30.0,
            p_push: 14.0,
            p_bend: 35.0,
            s_stance: 0.9,
            s_swing: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_progress: f64,
    pub w_yaw: f64,
    pub w_height: f64,
    pub w_orientation: f64,
    pub w_smooth: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_progress: 100.0,
            w_yaw: 0.5,
            w_height: 5.0,
            w_orientation: 2.0,
            w_smooth: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationConfig {
    pub enabled: bool,
    /// Multiplicative ranges (low, high) containing 1.0.
    pub mass_range: [f64; 2],
    pub stiffness_range: [f64; 2],
    pub damping_range: [f64; 2],
    pub hysteresis_range: [f64; 2],
    pub suction_range: [f64; 2],
    /// Link-count range, inclusive.
    pub link_count: [usize; 2],
    /// Candidate inclines sampled at reset (deg).
    pub inclines_deg: Vec<f64>,
    /// Additive observation noise standard deviations.
    pub noise_grf: f64,
    pub noise_angles: f64,
    pub noise_rates: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mass_range: [0.8, 1.2],
            stiffness_range: [0.8, 1.2],
            damping_range: [0.8, 1.2],
            hysteresis_range: [0.7, 1.3],
            suction_range: [0.8, 1.2],
            link_count: [5, 7],
            inclines_deg: vec![0.0],
            noise_grf: 0.1,
            noise_angles: 0.01,
            noise_rates: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Policy steps per episode.
    pub episode_steps: usize,
    /// Goal waypoint distance along the commanded heading (m).
    pub goal_distance: f64,
    /// Fall thresholds.
    pub fall_angle_deg: f64,
    pub fall_height_frac: f64,
    /// GRF observation source: `"oracle"` (true contact force + noise) or
    /// `"tactile"` (full sensor emulation + learned estimator).
    pub grf_mode: String,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_steps: 120,
            goal_distance: 2.0,
            fall_angle_deg: 45.0,
            fall_height_frac: 0.4,
            grf_mode: "oracle".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    // behavior cloning
    pub bc_episodes: usize,
    pub bc_epochs: usize,
    pub bc_batch: usize,
    pub bc_lr: f64,
    // SAC
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_episodes: usize,
    pub critic_lr_start: f64,
    pub critic_lr_end: f64,
    pub actor_lr: f64,
    pub alpha_lr: f64,
    /// Entropy target; NaN-free sentinel `0.0` means −dim(action).
    pub entropy_target: f64,
    pub episodes_flat: usize,
    pub episodes_incline: usize,
    pub incline_deg: f64,
    pub seeds: Vec<u64>,
    /// Gradient updates per environment step.
    pub updates_per_step: usize,
    /// Initial log-std of the cloned actor.
    pub bc_init_log_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bc_episodes: 40,
            bc_epochs: 300,
            bc_batch: 128,
            bc_lr: 1e-3,
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            buffer_capacity: 200_000,
            warmup_episodes: 100,
            critic_lr_start: 3e-4,
            critic_lr_end: 1e-4,
            actor_lr: 3e-4,
            alpha_lr: 3e-4,
            entropy_target: 0.0,
            episodes_flat: 400,
            episodes_incline: 200,
            incline_deg: 2.5,
            seeds: vec![1, 2, 3],
            updates_per_step: 1,
            bc_init_log_std: -1.0,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub body: BodyConfig,
    pub leg: LegConfig,
    pub world: WorldConfig,
    pub pneumatics: PneumaticsConfig,
    pub contact: ContactSuctionConfig,
    pub tactile: TactileConfig,
    pub gait: GaitConfig,
    pub reward: RewardConfig,
    pub randomization: RandomizationConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

/// Per-episode model perturbation produced by domain randomization.
#[derive(Debug, Clone)]
pub struct ModelPerturbation {
    pub n_segments: [usize; 4],
    pub mass_scale: f64,
    pub stiffness_scale: f64,
    pub damping_scale: f64,
    pub hysteresis_scale: f64,
    pub suction_scale: f64,
    pub incline_deg: f64,
}

impl ModelPerturbation {
    pub fn nominal(n_segments: usize, incline_deg: f64) -> Self {
        Self {
            n_segments: [n_segments; 4],
            mass_scale: 1.0,
            stiffness_scale: 1.0,
            damping_scale: 1.0,
            hysteresis_scale: 1.0,
            suction_scale: 1.0,
            incline_deg,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.pneumatics.p_max <= self.pneumatics.p_min {
            return err("pneumatics.p_max must exceed p_min");
        }
        if self.pneumatics.dt_physics <= 0.0
            || self.pneumatics.dt_inner < self.pneumatics.dt_physics
            || self.pneumatics.dt_policy < self.pneumatics.dt_inner
        {
            return err("rate triplet must satisfy dt_policy ≥ dt_inner ≥ dt_physics > 0");
        }
        if !(0.0..1.0).contains(&self.contact.suction_s_min) || self.contact.suction_s_min <= 0.0 {
            return err("contact.suction_s_min must lie in (0, 1)");
        }
        let r = &self.randomization;
        for range in [
            r.mass_range,
            r.stiffness_range,
            r.damping_range,
            r.hysteresis_range,
            r.suction_range,
        ] {
            if !(range[0] <= 1.0 && 1.0 <= range[1]) {
                return err("randomization ranges must contain 1.0");
            }
        }
        if r.link_count[0] < 5 || r.link_count[1] > 7 || r.link_count[0] > r.link_count[1] {
            return err("randomization.link_count must lie within [5, 7]");
        }
        if self.env.grf_mode != "oracle" && self.env.grf_mode != "tactile" {
            return err("env.grf_mode must be \"oracle\" or \"tactile\"");
        }
        self.build_robot(&ModelPerturbation::nominal(
            self.leg.n_segments,
            self.world.incline_deg,
        ))?;
        Ok(())
    }

    /// Ground plane for a given incline: uphill travel along +x.
    pub fn ground(&self, incline_deg: f64) -> (Vector3<F>, Vector3<F>) {
        let g = incline_deg.to_radians();
        (
            Vector3::zeros(),
            Vector3::new(-g.sin(), 0.0, g.cos()),
        )
    }

    /// Instantiates the robot model under a perturbation draw.
    pub fn build_robot(&self, pert: &ModelPerturbation) -> Result<RobotModel<F>, ModelError> {
        let b = &self.body;
        let l = &self.leg;
        let (ground_point, ground_normal) = self.ground(pert.incline_deg);

        // mounts at the bottom face corners; legs point down (leg +z = body −z)
        let mount_rotation = crate::spatial::rot_x(std::f64::consts::PI);
        let mx = b.half_extents[0] - b.mount_inset;
        let my = b.half_extents[1] - b.mount_inset;
        let mz = -b.half_extents[2];
        // leg order: LF, RF, LH, RH (left = +y, forward = +x)
        let mounts = [
            Vector3::new(mx, my, mz),
            Vector3::new(mx, -my, mz),
            Vector3::new(-mx, my, mz),
            Vector3::new(-mx, -my, mz),
        ];

        let legs = mounts
            .iter()
            .enumerate()
            .map(|(i, mount)| {
                let n = pert.n_segments[i];
                let seg_len = l.length / n as f64;
                let a_scale = pert.hysteresis_scale;
                let clamp01 = |a: f64| a.min(1.0).max(1e-3);
                LegModel {
                    n_segments: n,
                    segment_length: seg_len,
                    segment_mass: l.mass * pert.mass_scale / n as f64,
                    mount_rotation,
                    mount_offset: *mount,
                    base_stiffness: PerJointType {
                        revolute_x: l.stiffness_revolute * pert.stiffness_scale,
                        revolute_y: l.stiffness_revolute * pert.stiffness_scale,
                        prismatic_z: l.stiffness_prismatic * pert.stiffness_scale,
                        suction: l.stiffness_suction * pert.stiffness_scale,
                    },
                    base_damping: PerJointType {
                        revolute_x: l.damping_revolute * pert.damping_scale,
                        revolute_y: l.damping_revolute * pert.damping_scale,
                        prismatic_z: l.damping_prismatic * pert.damping_scale,
                        suction: l.damping_suction * pert.damping_scale,
                    },
                    stiffness_gain: l.stiffness_gain,
                    damping_gain: l.damping_gain,
                    alpha_exp: PerJointType {
                        revolute_x: clamp01(l.alpha_exp * a_scale),
                        revolute_y: clamp01(l.alpha_exp * a_scale),
                        prismatic_z: clamp01(l.alpha_exp * a_scale),
                        suction: 1.0,
                    },
                    alpha_con: PerJointType {
                        revolute_x: clamp01(l.alpha_con * a_scale),
                        revolute_y: clamp01(l.alpha_con * a_scale),
                        prismatic_z: clamp01(l.alpha_con * a_scale),
                        suction: 1.0,
                    },
                    chamber_radius: l.chamber_radius,
                    chamber_area: l.chamber_area,
                    chamber_angles: [
                        0.0,
                        120f64.to_radians(),
                        240f64.to_radians(),
                    ],
                    cup_mass: l.cup_mass,
                    cup_length: l.cup_length,
                }
            })
            .collect();

        let model = RobotModel {
            body_mass: b.mass * pert.mass_scale,
            body_inertia: Matrix3::from_diagonal(&Vector3::new(
                b.inertia_diag[0],
                b.inertia_diag[1],
                b.inertia_diag[2],
            )) * pert.mass_scale,
            body_dims: Vector3::new(b.half_extents[0], b.half_extents[1], b.half_extents[2]),
            legs,
            gravity: Vector3::new(0.0, 0.0, -self.world.gravity),
            ground_point,
            ground_normal,
            z_ref: b.z_ref,
        };
        model.validate()?;
        Ok(model)
    }
}
