//! Pneumatic actuation: chamber pressures to joint forces, targets, and
//! pressure-dependent PD gains, with an asymmetric first-order hysteresis
//! filter and a first-order valve lag inside the inner actuation loop.

use nalgebra::DVector;
use thiserror::Error;

use crate::model::{JointType, LegModel};
use crate::num::{sc, Scalar};
use crate::rigid_tree::{TreeDescription, TreeState};

/// kPa → Pa.
const KPA: f64 = 1e3;

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("action length {0}, expected 16")]
    Length(usize),
    #[error("non-finite action entry at index {0}")]
    NonFinite(usize),
}

/// Pneumatic and suction actuation state for one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct PneumaticState<S: Scalar> {
    /// Actual chamber pressures (kPa), lagging the command.
    pub pressures: [S; 12],
    /// Commanded chamber pressures (kPa).
    pub commanded: [S; 12],
    /// Hysteresis filter memory over all joints.
    pub filtered_q: DVector<S>,
    /// Suction commands per foot, in [0, 1].
    pub suction: [S; 4],
}

impl<S: Scalar> PneumaticState<S> {
    pub fn new(n_joints: usize) -> Self {
        Self {
            pressures: [S::zero(); 12],
            commanded: [S::zero(); 12],
            filtered_q: DVector::zeros(n_joints),
            suction: [S::zero(); 4],
        }
    }
}

/// Generalized force produced by one leg's three chambers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegForce<S> {
    /// Bending torque about the leg x axis (N·m).
    pub tau_x: S,
    /// Bending torque about the leg y axis (N·m).
    pub tau_y: S,
    /// Axial extension force (N).
    pub f_z: S,
}

/// Total and per-element gains plus joint targets for one leg.
#[derive(Debug, Clone, Copy)]
pub struct LegGains<S> {
    /// Total stiffness per driven joint type (rx, ry, pz).
    pub k_p_tot: [S; 3],
    pub k_d_tot: [S; 3],
    /// Per-element (per-joint) gains: `k_elem = nᵢ · k_tot`.
    pub k_p_elem: [S; 3],
    pub k_d_elem: [S; 3],
}

/// PD setpoint for every joint, held constant across the physics substeps
/// of one inner-loop iteration.
#[derive(Debug, Clone)]
pub struct JointSetpoint<S: Scalar> {
    pub q_cmd: DVector<S>,
    pub k_p: DVector<S>,
    pub k_d: DVector<S>,
}

/// Maps one leg's chamber pressures (kPa) to generalized forces.
///
/// `τx = A·r·Σ pⱼ sin βⱼ`, `τy = −A·r·Σ pⱼ cos βⱼ`, `f_z = A·Σ pⱼ`.
pub fn pressure_to_force<S: Scalar>(leg: &LegModel<S>, p_leg: [S; 3]) -> LegForce<S> {
    let a = leg.chamber_area;
    let r = leg.chamber_radius;
    let kpa: S = sc(KPA);
    let mut tau_x = S::zero();
    let mut tau_y = S::zero();
    let mut f_z = S::zero();
    for j in 0..3 {
        let p = p_leg[j] * kpa;
        let beta = leg.chamber_angles[j];
        tau_x += a * r * p * beta.sin();
        tau_y -= a * r * p * beta.cos();
        f_z += a * p;
    }
    LegForce { tau_x, tau_y, f_z }
}

/// Pressure-dependent stiffness/damping: `k_tot = k_base + c·|u|`, then the
/// springs-in-series per-element gains `k_elem = nᵢ · k_tot`.
pub fn gains_from_force<S: Scalar>(leg: &LegModel<S>, u: &LegForce<S>) -> LegGains<S> {
    let n: S = sc(leg.n_segments as f64);
    let kinds = [JointType::RevoluteX, JointType::RevoluteY, JointType::PrismaticZ];
    let us = [u.tau_x, u.tau_y, u.f_z];
    let mut g = LegGains {
        k_p_tot: [S::zero(); 3],
        k_d_tot: [S::zero(); 3],
        k_p_elem: [S::zero(); 3],
        k_d_elem: [S::zero(); 3],
    };
    for i in 0..3 {
        let kp = leg.base_stiffness.get(kinds[i]) + leg.stiffness_gain * us[i].abs();
        let kd = leg.base_damping.get(kinds[i]) + leg.damping_gain * us[i].abs();
        g.k_p_tot[i] = kp;
        g.k_d_tot[i] = kd;
        g.k_p_elem[i] = n * kp;
        g.k_d_elem[i] = n * kd;
    }
    g
}

/// Joint target per driven type: `q_targ = u / k_p_tot`, identical for all
/// segments of the leg (uniform-curvature assumption).
pub fn target_positions<S: Scalar>(u: &LegForce<S>, gains: &LegGains<S>) -> [S; 3] {
    [
        u.tau_x / gains.k_p_tot[0],
        u.tau_y / gains.k_p_tot[1],
        u.f_z / gains.k_p_tot[2],
    ]
}

/// Asymmetric first-order hysteresis filter, elementwise:
/// `q_cmd = q_prev + α ⊙ (q_targ − q_prev)` with `α = α_exp` on expansion
/// (target above memory) and `α_con` otherwise.
pub fn hysteresis_filter<S: Scalar>(
    q_prev: &DVector<S>,
    q_targ: &DVector<S>,
    alpha_exp: &DVector<S>,
    alpha_con: &DVector<S>,
) -> DVector<S> {
    let mut out = q_prev.clone();
    for i in 0..q_prev.len() {
        let d = q_targ[i] - q_prev[i];
        let a = if d > S::zero() { alpha_exp[i] } else { alpha_con[i] };
        out[i] = q_prev[i] + a * d;
    }
    out
}

/// Applies one 16-dim incremental action: 12 pressure increments scaled by
/// `delta_p_max`, 4 suction increments scaled by `delta_s_max`, clamped.
pub fn apply_action_increment<S: Scalar>(
    pneu: &mut PneumaticState<S>,
    action: &[S],
    delta_p_max: S,
    delta_s_max: S,
    p_min: S,
    p_max: S,
) -> Result<(), ActionError> {
    if action.len() != 16 {
        return Err(ActionError::Length(action.len()));
    }
    if let Some(i) = action.iter().position(|a| !a.is_finite()) {
        return Err(ActionError::NonFinite(i));
    }
    for i in 0..12 {
        let p = pneu.commanded[i] + delta_p_max * action[i];
        pneu.commanded[i] = p.min(p_max).max(p_min);
    }
    for i in 0..4 {
        let s = pneu.suction[i] + delta_s_max * action[12 + i];
        pneu.suction[i] = s.min(S::one()).max(S::zero());
    }
    Ok(())
}

/// One inner-loop iteration: advances the valve lag, recomputes forces,
/// gains, targets, and the hysteresis-filtered command, and returns the PD
/// setpoint for the following physics substeps.
pub fn inner_loop_step<S: Scalar>(
    pneu: &mut PneumaticState<S>,
    legs: &[LegModel<S>],
    tree: &TreeDescription<S>,
    dt_inner: S,
    tau_valve: S,
) -> JointSetpoint<S> {
    let lag = (dt_inner / tau_valve).min(S::one());
    for i in 0..12 {
        pneu.pressures[i] += lag * (pneu.commanded[i] - pneu.pressures[i]);
    }

    let m = tree.bodies.len();
    let mut q_targ = DVector::zeros(m);
    let mut a_exp = DVector::zeros(m);
    let mut a_con = DVector::zeros(m);
    let mut k_p = DVector::zeros(m);
    let mut k_d = DVector::zeros(m);

    let mut per_leg: Vec<([S; 3], LegGains<S>)> = Vec::with_capacity(legs.len());
    for (li, leg) in legs.iter().enumerate() {
        let p_leg = [
            pneu.pressures[3 * li],
            pneu.pressures[3 * li + 1],
            pneu.pressures[3 * li + 2],
        ];
        let u = pressure_to_force(leg, p_leg);
        let gains = gains_from_force(leg, &u);
        per_leg.push((target_positions(&u, &gains), gains));
    }

    for (j, body) in tree.bodies.iter().enumerate() {
        let leg = &legs[body.leg];
        let (targets, gains) = &per_leg[body.leg];
        let (t, kp, kd) = match body.kind {
            JointType::RevoluteX => (targets[0], gains.k_p_elem[0], gains.k_d_elem[0]),
            JointType::RevoluteY => (targets[1], gains.k_p_elem[1], gains.k_d_elem[1]),
            JointType::PrismaticZ => (targets[2], gains.k_p_elem[2], gains.k_d_elem[2]),
            JointType::SuctionPrismatic => (
                S::zero(),
                leg.base_stiffness.get(JointType::SuctionPrismatic),
                leg.base_damping.get(JointType::SuctionPrismatic),
            ),
        };
        q_targ[j] = t;
        a_exp[j] = leg.alpha_exp.get(body.kind);
        a_con[j] = leg.alpha_con.get(body.kind);
        k_p[j] = kp;
        k_d[j] = kd;
    }

    let q_cmd = hysteresis_filter(&pneu.filtered_q, &q_targ, &a_exp, &a_con);
    pneu.filtered_q = q_cmd.clone();
    JointSetpoint { q_cmd, k_p, k_d }
}

/// PD torques `τ = k_p (q_cmd − q) − k_d q̇` for the current tree state.
pub fn pd_torques<S: Scalar>(sp: &JointSetpoint<S>, state: &TreeState<S>) -> DVector<S> {
    let mut tau = DVector::zeros(sp.q_cmd.len());
    for j in 0..tau.len() {
        tau[j] = sp.k_p[j] * (sp.q_cmd[j] - state.q[j]) - sp.k_d[j] * state.qd[j];
    }
    tau
}
