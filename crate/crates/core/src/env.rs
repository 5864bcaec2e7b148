//! Reinforcement-learning environment: observation assembly (34-dim frame,
//! 4-frame stack), action application, reward, termination, domain
//! randomization, and observation noise.
//!
//! Frame layout (34 = 3+3+3+4+12+4+3+2):
//! roll/pitch/yaw, body angular velocity, body-frame proper acceleration
//! (gravity included), per-foot normal force estimates, commanded chamber
//! pressures, suction commands, body-frame goal offset + yaw error, and the
//! rhythm sin/cos pair.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{ExperimentConfig, ModelPerturbation, RandomizationConfig, RewardConfig};
use crate::gait::CpgState;
use crate::sim::{BuildError, Simulator, StepError};
use crate::tactile::{estimate_grf, hall_signal, ForceEstimator, HallSensorModel, HallState};
use crate::{Vec3, F};

/// Single sensor frame width.
pub const FRAME_DIM: usize = 34;
/// Stacked policy observation width (4 frames).
pub const STACK_DIM: usize = 136;
/// Policy action width (12 pressure + 4 suction increments).
pub const ACTION_DIM: usize = 16;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("action has {0} entries, expected {ACTION_DIM}")]
    ActionLength(usize),
    #[error("action contains a non-finite entry")]
    ActionNotFinite,
    #[error("episode already terminated; call reset")]
    Terminated,
    #[error("environment not reset")]
    NotReset,
}

/// Normal ground-reaction-force observation source.
pub enum GrfSource {
    /// True contact force plus Gaussian noise.
    Oracle,
    /// Full magnetic sensor emulation decoded by the learned estimator.
    Tactile(ForceEstimator),
}

/// Policy-facing observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Most recent sensor frame.
    pub frame: [F; FRAME_DIM],
    /// Four most recent frames, newest last.
    pub stack: [F; STACK_DIM],
}

/// Per-term reward penalties before weighting. The scalar reward is
/// exactly `1 - Σ w_i·term_i`; forward progress enters as a negative
/// penalty so moving ahead increases the reward.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    /// Negated forward displacement over the step (m).
    pub progress: F,
    /// Squared yaw error to the commanded heading (rad²).
    pub yaw: F,
    /// Absolute height error to the reference stance height (m).
    pub height: F,
    /// Squared roll/pitch norm (rad²).
    pub orientation: F,
    /// Squared norm of the normalized pressure increments.
    pub smoothness: F,
}

impl RewardBreakdown {
    /// Weighted penalty sum; the reward is `1 -` this value.
    pub fn weighted_sum(&self, w: &RewardConfig) -> F {
        w.w_progress * self.progress
            + w.w_yaw * self.yaw
            + w.w_height * self.height
            + w.w_orientation * self.orientation
            + w.w_smooth * self.smoothness
    }
}

/// Reward for one policy step.
///
/// `delta_x` is the forward displacement, `yaw_err` the signed yaw error,
/// `height_err` the signed height error, and `action_p` the 12 normalized
/// pressure increments of the applied action.
pub fn reward(
    delta_x: F,
    yaw_err: F,
    height_err: F,
    roll: F,
    pitch: F,
    action_p: &[F],
    weights: &RewardConfig,
) -> (F, RewardBreakdown) {
    let breakdown = RewardBreakdown {
        progress: -delta_x,
        yaw: yaw_err * yaw_err,
        height: height_err.abs(),
        orientation: roll * roll + pitch * pitch,
        smoothness: action_p.iter().map(|a| a * a).sum(),
    };
    (1.0 - breakdown.weighted_sum(weights), breakdown)
}

/// Noiseless inputs of one sensor frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameInputs {
    pub rpy: [F; 3],
    pub omega: [F; 3],
    /// Body-frame proper acceleration (gravity included).
    pub accel: [F; 3],
    pub grf: [F; 4],
    pub pressures: [F; 12],
    pub suction: [F; 4],
    /// Body-frame goal offset x, y and yaw error.
    pub goal: [F; 3],
    pub cpg: (F, F),
}

/// Assembles the ordered 34-dim frame, adding Gaussian noise to the
/// angles, rates, and force estimates per the randomization config.
pub fn make_frame(
    inputs: &FrameInputs,
    noise: &RandomizationConfig,
    rng: &mut ChaCha8Rng,
) -> [F; FRAME_DIM] {
    let mut draw = |std: F| -> F {
        if std > 0.0 {
            Normal::new(0.0, std).unwrap().sample(rng)
        } else {
            0.0
        }
    };
    let mut frame = [0.0; FRAME_DIM];
    for i in 0..3 {
        frame[i] = inputs.rpy[i] + draw(noise.noise_angles);
    }
    for i in 0..3 {
        frame[3 + i] = inputs.omega[i] + draw(noise.noise_rates);
    }
    frame[6..9].copy_from_slice(&inputs.accel);
    for i in 0..4 {
        frame[9 + i] = inputs.grf[i] + draw(noise.noise_grf);
    }
    frame[13..25].copy_from_slice(&inputs.pressures);
    frame[25..29].copy_from_slice(&inputs.suction);
    frame[29..32].copy_from_slice(&inputs.goal);
    frame[32] = inputs.cpg.0;
    frame[33] = inputs.cpg.1;
    frame
}

/// Step outcome details beyond the observation and reward.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Simulated time at the end of the step (s).
    pub time: F,
    /// True base pose: x, y, height above the ground plane, roll, pitch, yaw.
    pub pose: [F; 6],
    pub breakdown: RewardBreakdown,
    /// True per-foot normal forces (N).
    pub true_grf: [F; 4],
    /// Observed per-foot normal force estimates (N).
    pub est_grf: [F; 4],
    /// Episode ended by falling this step.
    pub fell: bool,
    /// Episode ended by exhausting the step budget.
    pub timeout: bool,
}

/// Result of one environment step.
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: F,
    /// Fall or step budget reached; no further steps accepted.
    pub terminated: bool,
    pub info: StepInfo,
}

/// One episodic environment instance. Instances are independent and
/// single-threaded; run one per worker with its own seed stream.
pub struct Env {
    pub cfg: ExperimentConfig,
    pub grf_source: GrfSource,
    pub sim: Option<Simulator>,
    rng: ChaCha8Rng,
    frames: [[F; FRAME_DIM]; 4],
    cpg: CpgState,
    hall_model: HallSensorModel,
    hall: [HallState; 4],
    steps: usize,
    done: bool,
    prev_x: F,
    /// Perturbation drawn at the last reset.
    pub pert: ModelPerturbation,
    /// Cleared to run suction-disabled ablations; applied at reset.
    pub suction_enabled: bool,
}

/// Passive settling time after placing the robot at rest (s).
const SETTLE_TIME: F = 2.0;

/// Samples a per-episode model perturbation, or the nominal model when
/// randomization is disabled.
pub fn sample_perturbation(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> ModelPerturbation {
    let r = &cfg.randomization;
    if !r.enabled {
        return ModelPerturbation::nominal(cfg.leg.n_segments, cfg.world.incline_deg);
    }
    let mut uniform = |range: [f64; 2]| rng.gen_range(range[0]..=range[1]);
    let mass_scale = uniform(r.mass_range);
    let stiffness_scale = uniform(r.stiffness_range);
    let damping_scale = uniform(r.damping_range);
    let hysteresis_scale = uniform(r.hysteresis_range);
    let suction_scale = uniform(r.suction_range);
    let n_segments =
        core::array::from_fn(|_| rng.gen_range(r.link_count[0]..=r.link_count[1]));
    let incline_deg = if r.inclines_deg.is_empty() {
        cfg.world.incline_deg
    } else {
        r.inclines_deg[rng.gen_range(0..r.inclines_deg.len())]
    };
    ModelPerturbation {
        n_segments,
        mass_scale,
        stiffness_scale,
        damping_scale,
        hysteresis_scale,
        suction_scale,
        incline_deg,
    }
}

impl Env {
    pub fn new(cfg: ExperimentConfig, grf_source: GrfSource) -> Self {
        let hall_model = HallSensorModel::from_config(&cfg.tactile);
        let cpg = CpgState::new(cfg.gait.period);
        Self {
            cfg,
            grf_source,
            sim: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            frames: [[0.0; FRAME_DIM]; 4],
            cpg,
            hall_model,
            hall: Default::default(),
            steps: 0,
            done: false,
            prev_x: 0.0,
            pert: ModelPerturbation::nominal(6, 0.0),
            suction_enabled: true,
        }
    }

    /// Simulated time since reset (s).
    pub fn time(&self) -> F {
        self.steps as F * self.cfg.pneumatics.dt_policy
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Starts a new episode: draws a perturbation, rebuilds and settles the
    /// robot with zeroed pneumatics, and fills the stack with the first
    /// frame repeated.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pert = sample_perturbation(&self.cfg, &mut self.rng);
        let mut sim = Simulator::new(&self.cfg, &self.pert, SETTLE_TIME)?;
        sim.suction_enabled = self.suction_enabled;
        self.prev_x = sim.body_pose().x_bar;
        self.sim = Some(sim);
        self.cpg = CpgState::new(self.cfg.gait.period);
        self.hall = Default::default();
        self.steps = 0;
        self.done = false;

        let frame = self.current_frame()?;
        self.frames = [frame; 4];
        Ok(self.observation())
    }

    /// Applies one 16-dim action and advances a full policy period.
    pub fn step(&mut self, action: &[F]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::Terminated);
        }
        if action.len() != ACTION_DIM {
            return Err(EnvError::ActionLength(action.len()));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::ActionNotFinite);
        }
        let sim = self.sim.as_mut().ok_or(EnvError::NotReset)?;
        sim.step_policy(action)?;
        self.steps += 1;
        self.cpg.advance(self.cfg.pneumatics.dt_policy);

        let sim = self.sim.as_ref().unwrap();
        let pose = sim.body_pose();
        let height = self.height_above_ground(&Vec3::new(pose.x_bar, pose.y, pose.z));
        let yaw_err = wrap_angle(pose.yaw);
        let (r, breakdown) = reward(
            pose.x_bar - self.prev_x,
            yaw_err,
            height - self.cfg.body.z_ref,
            pose.roll,
            pose.pitch,
            &action[..12],
            &self.cfg.reward,
        );
        self.prev_x = pose.x_bar;

        let fell = pose.roll.abs() > self.cfg.env.fall_angle_deg.to_radians()
            || pose.pitch.abs() > self.cfg.env.fall_angle_deg.to_radians()
            || height < self.cfg.env.fall_height_frac * self.cfg.body.z_ref;
        let timeout = !fell && self.steps >= self.cfg.env.episode_steps;
        self.done = fell || timeout;

        let true_grf = self.sim.as_ref().unwrap().true_grf();
        let frame = self.current_frame()?;
        self.frames.rotate_left(1);
        self.frames[3] = frame;
        let observation = self.observation();
        let est_grf = core::array::from_fn(|i| observation.frame[9 + i]);

        Ok(StepOutcome {
            observation,
            reward: r,
            terminated: self.done,
            info: StepInfo {
                time: self.time(),
                pose: [pose.x_bar, pose.y, height, pose.roll, pose.pitch, pose.yaw],
                breakdown,
                true_grf,
                est_grf,
                fell,
                timeout,
            },
        })
    }

    /// Height of the base above the inclined ground plane (m).
    fn height_above_ground(&self, p: &Vec3) -> F {
        let sim = self.sim.as_ref().unwrap();
        sim.model.ground_normal.dot(&(p - sim.model.ground_point))
    }

    fn current_frame(&mut self) -> Result<[F; FRAME_DIM], EnvError> {
        let sim = self.sim.as_ref().ok_or(EnvError::NotReset)?;
        let pose = sim.body_pose();
        let rot = sim.state.base_quat.to_rotation_matrix();
        let accel_body = rot.transpose() * (pose.lin_accel - sim.model.gravity);

        let true_grf = sim.true_grf();
        let feet = sim.feet();
        let grf = match &self.grf_source {
            GrfSource::Oracle => true_grf,
            GrfSource::Tactile(est) => {
                let dt = self.cfg.pneumatics.dt_policy;
                let mut grf = [0.0; 4];
                for i in 0..4 {
                    let partial = feet[i].theta > 0.05;
                    let reading = hall_signal(
                        &self.hall_model,
                        &mut self.hall[i],
                        true_grf[i],
                        partial,
                        dt,
                        Some(&mut self.rng),
                    );
                    grf[i] = estimate_grf(est, &reading.values);
                }
                grf
            }
        };

        let (cy, sy) = (pose.yaw.cos(), pose.yaw.sin());
        let dx = self.cfg.env.goal_distance - pose.x_bar;
        let dy = -pose.y;
        let goal = [cy * dx + sy * dy, -sy * dx + cy * dy, wrap_angle(pose.yaw)];

        let inputs = FrameInputs {
            rpy: [pose.roll, pose.pitch, pose.yaw],
            omega: [pose.omega.x, pose.omega.y, pose.omega.z],
            accel: [accel_body.x, accel_body.y, accel_body.z],
            grf,
            pressures: sim.pneu.commanded,
            suction: sim.pneu.suction,
            goal,
            cpg: self.cpg.signal(),
        };
        let noise = if matches!(self.grf_source, GrfSource::Tactile(_)) {
            // the sensor emulation already carries its own noise
            let mut quiet = self.cfg.randomization.clone();
            quiet.noise_grf = 0.0;
            quiet
        } else {
            self.cfg.randomization.clone()
        };
        Ok(make_frame(&inputs, &noise, &mut self.rng))
    }

    fn observation(&self) -> Observation {
        let mut stack = [0.0; STACK_DIM];
        for (i, f) in self.frames.iter().enumerate() {
            stack[i * FRAME_DIM..(i + 1) * FRAME_DIM].copy_from_slice(f);
        }
        debug_assert_eq!(stack.len(), STACK_DIM);
        Observation {
            frame: self.frames[3],
            stack,
        }
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: F) -> F {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

/// One line of the episode log: whitespace-separated
/// `t x y z roll pitch yaw reward p_prog p_yaw p_h p_ori p_smooth
/// f1..f4 fhat1..fhat4 a1..a16`.
pub fn log_line(info: &StepInfo, reward: F, action: &[F]) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(256);
    let _ = write!(s, "{:.3}", info.time);
    for v in info.pose {
        let _ = write!(s, " {v:.6}");
    }
    let b = &info.breakdown;
    let _ = write!(
        s,
        " {reward:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        b.progress, b.yaw, b.height, b.orientation, b.smoothness
    );
    for v in info.true_grf.iter().chain(info.est_grf.iter()) {
        let _ = write!(s, " {v:.4}");
    }
    for v in action {
        let _ = write!(s, " {v:.4}");
    }
    s
}
