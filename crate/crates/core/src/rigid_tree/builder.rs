//! Kinematic tree construction from a [`RobotModel`].
//!
//! Per leg the chain is, from the mount outward:
//! `[rx, ry, pz] × n_segments, suction_pz`. The revolute pair carries no
//! inertia; the segment mass sits on the prismatic body so articulated
//! inertias stay nonsingular.

use nalgebra::{Matrix3, Matrix6, Vector3};

use crate::model::{JointType, ModelError, RobotModel};
use crate::num::{sc, Scalar};
use crate::spatial::{spatial_inertia, Xform};

/// One joint/body pair of the tree (joint `i` moves body `i`).
#[derive(Debug, Clone)]
pub struct BodyDesc<S: Scalar> {
    /// Parent body index; `None` means the floating base.
    pub parent: Option<usize>,
    /// Fixed transform from the parent body frame to this joint's frame.
    pub xtree: Xform<S>,
    pub kind: JointType,
    /// Spatial inertia at the body frame origin.
    pub inertia: Matrix6<S>,
    pub mass: S,
    pub com: Vector3<S>,
    /// Leg this joint belongs to.
    pub leg: usize,
    /// Segment index within the leg (suction joint reuses the last index).
    pub segment: usize,
    /// Link count `nᵢ` of the owning leg, the springs-in-series multiplier.
    pub n_links: usize,
}

/// Built tree: base description plus one entry per 1-DOF joint.
#[derive(Debug, Clone)]
pub struct TreeDescription<S: Scalar> {
    pub bodies: Vec<BodyDesc<S>>,
    pub base_mass: S,
    pub base_inertia: Matrix6<S>,
    /// When set the base does not move (test harness use).
    pub fixed_base: bool,
    /// Suction-cup body index per leg.
    pub foot_bodies: [usize; 4],
    /// Rim offset along the cup frame +z (m), per leg.
    pub cup_length: [S; 4],
    pub gravity: Vector3<S>,
}

impl<S: Scalar> TreeDescription<S> {
    pub fn joint_count(&self) -> usize {
        self.bodies.len()
    }
}

/// Thin-cylinder inertia about the COM, axis along z.
fn segment_inertia_com<S: Scalar>(mass: S, length: S, radius: S) -> Matrix3<S> {
    let twelve = sc::<S>(12.0);
    let i_perp = mass * (length * length / twelve + radius * radius / sc::<S>(4.0));
    let i_axis = mass * radius * radius / sc::<S>(2.0);
    Matrix3::from_diagonal(&Vector3::new(i_perp, i_perp, i_axis))
}

/// Builds the articulated tree for `model`.
///
/// Joint ordering per leg: `(rx, ry, pz)` for each segment, then the
/// suction prismatic. Legs appear in model order.
pub fn build_tree<S: Scalar>(model: &RobotModel<S>) -> Result<TreeDescription<S>, ModelError> {
    model.validate()?;

    let mut bodies: Vec<BodyDesc<S>> = Vec::with_capacity(model.joint_count());
    let mut foot_bodies = [0usize; 4];
    let mut cup_length = [S::zero(); 4];

    for (leg_idx, leg) in model.legs.iter().enumerate() {
        let half = leg.segment_length / sc::<S>(2.0);
        let seg_com = Vector3::new(S::zero(), S::zero(), half);
        let seg_inertia = spatial_inertia(
            leg.segment_mass,
            &seg_com,
            &segment_inertia_com(leg.segment_mass, leg.segment_length, leg.chamber_radius),
        );
        let zero_inertia = Matrix6::zeros();

        let mut parent: Option<usize> = None;
        for seg in 0..leg.n_segments {
            let xtree_first = if seg == 0 {
                Xform::new(leg.mount_rotation, leg.mount_offset)
            } else {
                Xform::translation(Vector3::new(S::zero(), S::zero(), leg.segment_length))
            };
            let specs = [
                (JointType::RevoluteX, xtree_first, zero_inertia, S::zero()),
                (JointType::RevoluteY, Xform::identity(), zero_inertia, S::zero()),
                (JointType::PrismaticZ, Xform::identity(), seg_inertia, leg.segment_mass),
            ];
            for (kind, xtree, inertia, mass) in specs {
                bodies.push(BodyDesc {
                    parent,
                    xtree,
                    kind,
                    inertia,
                    mass,
                    com: if kind == JointType::PrismaticZ {
                        seg_com
                    } else {
                        Vector3::zeros()
                    },
                    leg: leg_idx,
                    segment: seg,
                    n_links: leg.n_segments,
                });
                parent = Some(bodies.len() - 1);
            }
        }

        // suction cup: one stiff prismatic carrying the cup mass
        let cup_com = Vector3::new(S::zero(), S::zero(), leg.cup_length / sc::<S>(2.0));
        bodies.push(BodyDesc {
            parent,
            xtree: Xform::translation(Vector3::new(S::zero(), S::zero(), leg.segment_length)),
            kind: JointType::SuctionPrismatic,
            inertia: spatial_inertia(
                leg.cup_mass,
                &cup_com,
                &segment_inertia_com(leg.cup_mass, leg.cup_length, leg.chamber_radius),
            ),
            mass: leg.cup_mass,
            com: cup_com,
            leg: leg_idx,
            segment: leg.n_segments - 1,
            n_links: leg.n_segments,
        });
        foot_bodies[leg_idx] = bodies.len() - 1;
        cup_length[leg_idx] = leg.cup_length;
    }

    debug_assert_eq!(bodies.len(), model.joint_count());
    Ok(TreeDescription {
        bodies,
        base_mass: model.body_mass,
        base_inertia: spatial_inertia(model.body_mass, &Vector3::zeros(), &model.body_inertia),
        fixed_base: false,
        foot_bodies,
        cup_length,
        gravity: model.gravity,
    })
}
