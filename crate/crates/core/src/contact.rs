//! Ground interaction: penalty contact with Coulomb friction at the feet
//! and body corners, plus gated suction anchoring.
//!
//! Friction uses a stick anchor per contact point: a tangential spring to
//! the attachment point, capped at `μ·N`; the anchor slides when the cap is
//! reached. This keeps static friction stiff while staying stable under
//! explicit integration at the physics step.

use nalgebra::Vector3;

use crate::num::{sc, Scalar};
use crate::rigid_tree::{forward_kinematics, foot_frames, FootFrame, TreeDescription, TreeState};
use crate::spatial::{angular, compose, linear, ForceVec};

/// Contact and suction parameters.
#[derive(Debug, Clone, Copy)]
pub struct ContactParams<S> {
    /// Penalty stiffness (N/m).
    pub stiffness: S,
    /// Penalty damping (N·s/m).
    pub damping: S,
    /// Coulomb friction coefficient against the ground surface.
    pub friction: S,
    /// Friction coefficient of an engaged suction-cup seal; the vacuum
    /// preload and the cup rubber set the shear capacity, not the bare
    /// ground surface.
    pub cup_friction: S,
    /// Stick-anchor tangential stiffness (N/m) and damping (N·s/m).
    pub tangent_stiffness: S,
    pub tangent_damping: S,
    /// Maximum suction force (N).
    pub f_suction_max: S,
    /// Rim-distance gate (m).
    pub d_z_max: S,
    /// Alignment gate (rad).
    pub theta_max: S,
    /// Command gate.
    pub s_min: S,
}

/// Stick anchors for the 4 feet followed by the 8 body corners.
#[derive(Debug, Clone, Default)]
pub struct ContactState<S: Scalar> {
    anchors: [Option<Vector3<S>>; 12],
}

impl<S: Scalar> ContactState<S> {
    pub fn new() -> Self {
        Self { anchors: [None; 12] }
    }
}

/// Per-foot contact summary.
#[derive(Debug, Clone, Copy, Default)]
pub struct FootContact<S: Scalar> {
    /// Normal contact force magnitude (N), ≥ 0.
    pub normal_force: S,
    /// Tangential friction force magnitude (N).
    pub tangential_force: S,
    /// Suction force magnitude applied (N).
    pub suction_force: S,
    pub suction_engaged: bool,
    /// Penetration depth (m), ≥ 0 when touching.
    pub penetration: S,
}

/// Contact summary for one evaluation.
#[derive(Debug, Clone)]
pub struct ContactReport<S: Scalar> {
    pub feet: [FootContact<S>; 4],
    /// Total normal force over all contact points including body corners (N).
    pub total_normal: S,
}

/// Suction gate and force law: engaged iff `d_z < d_z_max ∧ θ < θ_max ∧
/// s > s_min` (all strict); force `s · F_max` toward the ground.
pub fn suction_force<S: Scalar>(
    foot: &FootFrame<S>,
    s_cmd: S,
    params: &ContactParams<S>,
    ground_normal: &Vector3<S>,
) -> (Vector3<S>, bool) {
    let engaged =
        foot.d_z < params.d_z_max && foot.theta < params.theta_max && s_cmd > params.s_min;
    if engaged {
        (-ground_normal * (s_cmd * params.f_suction_max), true)
    } else {
        (Vector3::zeros(), false)
    }
}

pub(crate) struct PointForce<S: Scalar> {
    pub normal: S,
    pub tangential: S,
    pub penetration: S,
    pub force_world: Vector3<S>,
}

/// Penalty normal force plus anchored Coulomb friction at one point.
/// `extra_normal` raises the friction cap (suction preload).
pub(crate) fn point_contact<S: Scalar>(
    pos: &Vector3<S>,
    vel: &Vector3<S>,
    anchor: &mut Option<Vector3<S>>,
    params: &ContactParams<S>,
    ground_point: &Vector3<S>,
    ground_normal: &Vector3<S>,
    extra_normal: S,
) -> Option<PointForce<S>> {
    let depth = -(pos - ground_point).dot(ground_normal);
    if depth <= S::zero() {
        *anchor = None;
        return None;
    }
    let depth_rate = -vel.dot(ground_normal);
    let f_n = (params.stiffness * depth + params.damping * depth_rate).max(S::zero());

    // tangential stick spring against the anchor, Coulomb-capped
    let p_t = pos + ground_normal * depth; // projection onto the plane
    let a = anchor.get_or_insert(p_t);
    let delta = p_t - *a;
    let v_t = vel - ground_normal * vel.dot(ground_normal);
    let mut f_t = -delta * params.tangent_stiffness - v_t * params.tangent_damping;
    let mu = if extra_normal > S::zero() {
        params.cup_friction
    } else {
        params.friction
    };
    let cap = mu * (f_n + extra_normal);
    let mag = f_t.norm();
    if mag > cap {
        if cap > S::zero() && mag > sc(1e-12) {
            f_t *= cap / mag;
            // slide the anchor so the spring holds exactly the capped force
            *a = p_t + (f_t + v_t * params.tangent_damping) / params.tangent_stiffness;
        } else {
            f_t = Vector3::zeros();
            *a = p_t;
        }
    }

    Some(PointForce {
        normal: f_n,
        tangential: f_t.norm(),
        penetration: depth,
        force_world: ground_normal * f_n + f_t,
    })
}

/// Computes all ground-interaction wrenches for the current state.
///
/// Returns body-coordinate spatial forces indexed as in
/// [`crate::rigid_tree::step_dynamics`] (`[0]` = base), and the report.
#[allow(clippy::too_many_arguments)]
pub fn contact_forces<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &TreeState<S>,
    contact_state: &mut ContactState<S>,
    params: &ContactParams<S>,
    suction_cmds: &[S; 4],
    body_half_extents: &Vector3<S>,
    ground_point: &Vector3<S>,
    ground_normal: &Vector3<S>,
    suction_enabled: bool,
) -> (Vec<ForceVec<S>>, ContactReport<S>) {
    let (base, frames) = forward_kinematics(tree, state);
    let feet = foot_frames(tree, state, ground_point, ground_normal);
    let mut ext: Vec<ForceVec<S>> = vec![ForceVec::zeros(); tree.bodies.len() + 1];
    let mut report = ContactReport {
        feet: [FootContact::default(); 4],
        total_normal: S::zero(),
    };

    // accumulate a world-frame force applied at a world point onto a body
    let apply = |ext: &mut Vec<ForceVec<S>>,
                 slot: usize,
                 rot: &nalgebra::Matrix3<S>,
                 origin: &Vector3<S>,
                 point: &Vector3<S>,
                 force_w: &Vector3<S>| {
        let n_w = (point - origin).cross(force_w);
        ext[slot] += compose(&(rot.transpose() * n_w), &(rot.transpose() * force_w));
    };

    for leg in 0..4 {
        let foot = &feet[leg];
        let body = tree.foot_bodies[leg];
        let frame = &frames[body];

        let (suction_w, engaged) = if suction_enabled {
            suction_force(foot, suction_cmds[leg], params, ground_normal)
        } else {
            (Vector3::zeros(), false)
        };
        let preload = if engaged {
            suction_cmds[leg] * params.f_suction_max
        } else {
            S::zero()
        };

        let mut fc = FootContact {
            suction_engaged: engaged,
            suction_force: suction_w.norm(),
            ..FootContact::default()
        };
        if let Some(pf) = point_contact(
            &foot.rim_pos,
            &foot.rim_vel,
            &mut contact_state.anchors[leg],
            params,
            ground_point,
            ground_normal,
            preload,
        ) {
            fc.normal_force = pf.normal;
            fc.tangential_force = pf.tangential;
            fc.penetration = pf.penetration;
            report.total_normal += pf.normal;
            apply(
                &mut ext,
                body + 1,
                &frame.rot,
                &frame.pos,
                &foot.rim_pos,
                &pf.force_world,
            );
        }
        if engaged {
            apply(
                &mut ext,
                body + 1,
                &frame.rot,
                &frame.pos,
                &foot.rim_pos,
                &suction_w,
            );
        }
        report.feet[leg] = fc;
    }

    // body box corners against the plane (fall and scrape cases)
    let h = body_half_extents;
    let mut corner = 4;
    for sx in [-S::one(), S::one()] {
        for sy in [-S::one(), S::one()] {
            for sz in [-S::one(), S::one()] {
                let local = Vector3::new(sx * h.x, sy * h.y, sz * h.z);
                let pos = base.pos + base.rot * local;
                let w = angular(&base.vel);
                let vel = base.rot * (linear(&base.vel) + w.cross(&local));
                if let Some(pf) = point_contact(
                    &pos,
                    &vel,
                    &mut contact_state.anchors[corner],
                    params,
                    ground_point,
                    ground_normal,
                    S::zero(),
                ) {
                    report.total_normal += pf.normal;
                    apply(&mut ext, 0, &base.rot, &base.pos, &pos, &pf.force_world);
                }
                corner += 1;
            }
        }
    }

    (ext, report)
}
