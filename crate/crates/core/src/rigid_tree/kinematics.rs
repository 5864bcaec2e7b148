//! Forward kinematics and derived quantities: body pose (IMU proxy),
//! foot frames relative to the ground plane, momentum and energy.

use nalgebra::{Matrix3, Vector3, Vector6};

use super::builder::TreeDescription;
use super::state::TreeState;
use crate::model::JointType;
use crate::num::{sc, Scalar};
use crate::spatial::{angular, linear, rot_x, rot_y, MotionVec, Xform};

/// World pose and body-frame spatial velocity of one link.
#[derive(Debug, Clone, Copy)]
pub struct BodyFrame<S: Scalar> {
    /// World ← body rotation.
    pub rot: Matrix3<S>,
    /// Body-frame origin in world coordinates.
    pub pos: Vector3<S>,
    /// Spatial velocity `[ω; v]` in body coordinates.
    pub vel: MotionVec<S>,
}

/// Base pose summary in the reward/termination vocabulary.
#[derive(Debug, Clone, Copy)]
pub struct BodyPose<S: Scalar> {
    /// Base position along the commanded travel axis (world x).
    pub x_bar: S,
    /// Lateral position (world y).
    pub y: S,
    /// Body height (world z).
    pub z: S,
    pub roll: S,
    pub pitch: S,
    pub yaw: S,
    /// Angular velocity in body coordinates (rad/s).
    pub omega: Vector3<S>,
    /// Base linear velocity in world coordinates (m/s).
    pub lin_vel: Vector3<S>,
    /// Finite-difference linear acceleration in world coordinates (m/s²);
    /// zero when no previous velocity is supplied.
    pub lin_accel: Vector3<S>,
    /// Pitch within 1° of the gimbal singularity.
    pub gimbal_flagged: bool,
}

/// One foot (suction cup rim) relative to the ground plane.
#[derive(Debug, Clone, Copy)]
pub struct FootFrame<S: Scalar> {
    /// Cup rim position in world coordinates.
    pub rim_pos: Vector3<S>,
    /// Rim velocity in world coordinates.
    pub rim_vel: Vector3<S>,
    /// Unit foot axis pointing from the foot up the leg (world).
    pub axis: Vector3<S>,
    /// Signed rim distance to the plane along the normal (m).
    pub d_z: S,
    /// Angle between foot axis and plane normal (rad).
    pub theta: S,
}

fn joint_xform<S: Scalar>(kind: JointType, q: S) -> Xform<S> {
    match kind {
        JointType::RevoluteX => Xform::rotation(rot_x(q)),
        JointType::RevoluteY => Xform::rotation(rot_y(q)),
        JointType::PrismaticZ | JointType::SuctionPrismatic => {
            Xform::translation(Vector3::new(S::zero(), S::zero(), q))
        }
    }
}

/// World poses and velocities for the base (`.0`) and every body (`.1`).
pub fn forward_kinematics<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &TreeState<S>,
) -> (BodyFrame<S>, Vec<BodyFrame<S>>) {
    let base = BodyFrame {
        rot: state.base_quat.to_rotation_matrix().into_inner(),
        pos: state.base_pos,
        vel: state.base_twist,
    };
    let mut frames: Vec<BodyFrame<S>> = Vec::with_capacity(tree.bodies.len());
    for (i, body) in tree.bodies.iter().enumerate() {
        let xl = joint_xform(body.kind, state.q[i]).compose(&body.xtree);
        let parent = match body.parent {
            Some(p) => &frames[p],
            None => &base,
        };
        let axis: MotionVec<S> = match body.kind {
            JointType::RevoluteX => Vector6::new(
                S::one(),
                S::zero(),
                S::zero(),
                S::zero(),
                S::zero(),
                S::zero(),
            ),
            JointType::RevoluteY => Vector6::new(
                S::zero(),
                S::one(),
                S::zero(),
                S::zero(),
                S::zero(),
                S::zero(),
            ),
            _ => Vector6::new(
                S::zero(),
                S::zero(),
                S::zero(),
                S::zero(),
                S::zero(),
                S::one(),
            ),
        };
        let vel = xl.apply_motion(&parent.vel) + axis * state.qd[i];
        let rot = parent.rot * xl.e.transpose();
        let pos = parent.pos + parent.rot * xl.r;
        frames.push(BodyFrame { rot, pos, vel });
    }
    (base, frames)
}

/// Base pose in roll-pitch-yaw (intrinsic Z-Y-X) convention.
pub fn body_kinematics<S: Scalar>(
    state: &TreeState<S>,
    prev_lin_vel: Option<Vector3<S>>,
    dt: S,
) -> BodyPose<S> {
    let (roll, pitch, yaw) = state.base_quat.euler_angles();
    let rot = state.base_quat.to_rotation_matrix();
    let omega = angular(&state.base_twist);
    let lin_vel = rot * linear(&state.base_twist);
    let lin_accel = match prev_lin_vel {
        Some(prev) if dt > S::zero() => (lin_vel - prev) / dt,
        _ => Vector3::zeros(),
    };
    let gimbal_limit: S = sc(89.0_f64.to_radians());
    BodyPose {
        x_bar: state.base_pos.x,
        y: state.base_pos.y,
        z: state.base_pos.z,
        roll,
        pitch,
        yaw,
        omega,
        lin_vel,
        lin_accel,
        gimbal_flagged: pitch.abs() > gimbal_limit,
    }
}

/// Foot frames of all four suction cups relative to the ground plane.
pub fn foot_frames<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &TreeState<S>,
    ground_point: &Vector3<S>,
    ground_normal: &Vector3<S>,
) -> [FootFrame<S>; 4] {
    let (_, frames) = forward_kinematics(tree, state);
    core::array::from_fn(|leg| {
        let body = tree.foot_bodies[leg];
        let f = &frames[body];
        let rim_local = Vector3::new(S::zero(), S::zero(), tree.cup_length[leg]);
        let rim_pos = f.pos + f.rot * rim_local;
        let w = angular(&f.vel);
        let vl = linear(&f.vel);
        let rim_vel = f.rot * (vl + w.cross(&rim_local));
        // cup +z points down the leg; the foot axis points back up
        let axis = -(f.rot * Vector3::new(S::zero(), S::zero(), S::one()));
        let d_z = (rim_pos - ground_point).dot(ground_normal);
        let cos = axis.dot(ground_normal).min(S::one()).max(-S::one());
        FootFrame {
            rim_pos,
            rim_vel,
            axis,
            d_z,
            theta: cos.acos(),
        }
    })
}

/// Total linear momentum in world coordinates (kg·m/s).
pub fn linear_momentum<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &TreeState<S>,
) -> Vector3<S> {
    let (base, frames) = forward_kinematics(tree, state);
    let com_vel = |f: &BodyFrame<S>, com: &Vector3<S>| {
        f.rot * (linear(&f.vel) + angular(&f.vel).cross(com))
    };
    let mut p = com_vel(&base, &Vector3::zeros()) * tree.base_mass;
    for (body, frame) in tree.bodies.iter().zip(frames.iter()) {
        if body.mass > S::zero() {
            p += com_vel(frame, &body.com) * body.mass;
        }
    }
    p
}

/// Whole-robot center of mass in world coordinates (m).
pub fn center_of_mass<S: Scalar>(tree: &TreeDescription<S>, state: &TreeState<S>) -> Vector3<S> {
    let (base, frames) = forward_kinematics(tree, state);
    let mut weighted = base.pos * tree.base_mass;
    let mut total = tree.base_mass;
    for (body, frame) in tree.bodies.iter().zip(frames.iter()) {
        if body.mass > S::zero() {
            weighted += (frame.pos + frame.rot * body.com) * body.mass;
            total += body.mass;
        }
    }
    weighted / total
}

/// Kinetic plus gravitational potential energy (J). Joint spring energy is
/// not included; callers add it when springs act.
pub fn mechanism_energy<S: Scalar>(tree: &TreeDescription<S>, state: &TreeState<S>) -> S {
    let (base, frames) = forward_kinematics(tree, state);
    let g = tree.gravity;
    let mut e = base.vel.dot(&(tree.base_inertia * base.vel)) * sc::<S>(0.5)
        - tree.base_mass * g.dot(&base.pos);
    for (body, frame) in tree.bodies.iter().zip(frames.iter()) {
        e += frame.vel.dot(&(body.inertia * frame.vel)) * sc::<S>(0.5);
        if body.mass > S::zero() {
            let com_w = frame.pos + frame.rot * body.com;
            e -= body.mass * g.dot(&com_w);
        }
    }
    e
}
