//! Generalized state of the tree.

use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};

use crate::num::Scalar;

/// Generalized positions/velocities of the floating base and all joints.
///
/// The base twist is expressed in base (body) coordinates as `[ω; v]`,
/// with `v` the velocity of the base-frame origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeState<S: Scalar> {
    pub base_pos: Vector3<S>,
    pub base_quat: UnitQuaternion<S>,
    pub base_twist: Vector6<S>,
    pub q: DVector<S>,
    pub qd: DVector<S>,
    pub sim_time: S,
}

impl<S: Scalar> TreeState<S> {
    /// Robot at rest: base at `base_pos`, identity orientation, all joints zero.
    pub fn at_rest(n_joints: usize, base_pos: Vector3<S>) -> Self {
        Self {
            base_pos,
            base_quat: UnitQuaternion::identity(),
            base_twist: Vector6::zeros(),
            q: DVector::zeros(n_joints),
            qd: DVector::zeros(n_joints),
            sim_time: S::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos.iter().all(|x| x.is_finite())
            && self.base_quat.coords.iter().all(|x| x.is_finite())
            && self.base_twist.iter().all(|x| x.is_finite())
            && self.q.iter().all(|x| x.is_finite())
            && self.qd.iter().all(|x| x.is_finite())
    }
}
