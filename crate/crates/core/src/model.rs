//! Robot description: floating body, four soft-leg chains, suction feet.
//!
//! A leg chain approximates the continuously deforming actuator as rigid
//! links joined by spring-damper joints. Each segment contributes a
//! (revolute-x, revolute-y, prismatic-z) joint triple; the foot adds one
//! terminal suction prismatic.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::num::Scalar;

/// Joint kinds appearing in a leg chain, in chain order within a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointType {
    RevoluteX,
    RevoluteY,
    PrismaticZ,
    SuctionPrismatic,
}

/// One scalar per joint type.
#[derive(Debug, Clone, Copy)]
pub struct PerJointType<S> {
    pub revolute_x: S,
    pub revolute_y: S,
    pub prismatic_z: S,
    pub suction: S,
}

impl<S: Copy> PerJointType<S> {
    pub fn get(&self, kind: JointType) -> S {
        match kind {
            JointType::RevoluteX => self.revolute_x,
            JointType::RevoluteY => self.revolute_y,
            JointType::PrismaticZ => self.prismatic_z,
            JointType::SuctionPrismatic => self.suction,
        }
    }
}

/// One pneumatically driven leg with a suction foot.
#[derive(Debug, Clone)]
pub struct LegModel<S: Scalar> {
    /// Number of chain segments, within `[5, 7]`.
    pub n_segments: usize,
    /// Rigid link length (m).
    pub segment_length: S,
    /// Per-segment mass (kg); total leg mass split equally.
    pub segment_mass: S,
    /// Rotation mapping leg coordinates into body coordinates
    /// (leg +z points from mount toward the foot).
    pub mount_rotation: Matrix3<S>,
    /// Mount point in body coordinates (m).
    pub mount_offset: Vector3<S>,
    /// Nominal base stiffness per joint type (N·m/rad or N/m).
    pub base_stiffness: PerJointType<S>,
    /// Nominal base damping per joint type (N·m·s/rad or N·s/m).
    pub base_damping: PerJointType<S>,
    /// Stiffness growth with actuation magnitude (dimensionless).
    pub stiffness_gain: S,
    /// Damping growth with actuation magnitude (dimensionless).
    pub damping_gain: S,
    /// Hysteresis coefficient for expansion/bending, per joint type, in (0,1].
    pub alpha_exp: PerJointType<S>,
    /// Hysteresis coefficient for contraction/straightening, per joint type, in (0,1].
    pub alpha_con: PerJointType<S>,
    /// Chamber moment arm about the leg axis (m).
    pub chamber_radius: S,
    /// Effective chamber cross-section (m²).
    pub chamber_area: S,
    /// Chamber placement angles about the leg axis (rad).
    pub chamber_angles: [S; 3],
    /// Suction cup mass (kg).
    pub cup_mass: S,
    /// Suction cup length from the terminal joint to the rim (m).
    pub cup_length: S,
}

impl<S: Scalar> LegModel<S> {
    /// Joints contributed by this leg including the suction prismatic.
    pub fn joint_count(&self) -> usize {
        3 * self.n_segments + 1
    }
}

/// Full robot description.
#[derive(Debug, Clone)]
pub struct RobotModel<S: Scalar> {
    /// Central body mass (kg).
    pub body_mass: S,
    /// Central body inertia about its COM (kg·m²).
    pub body_inertia: Matrix3<S>,
    /// Body box half-extents (m), used for corner contact points.
    pub body_dims: Vector3<S>,
    pub legs: Vec<LegModel<S>>,
    /// Gravity vector (m/s²).
    pub gravity: Vector3<S>,
    /// A point on the ground plane (m).
    pub ground_point: Vector3<S>,
    /// Unit outward ground normal; the incline is encoded here.
    pub ground_normal: Vector3<S>,
    /// Nominal body height used by the height reward term (m).
    pub z_ref: S,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected exactly 4 legs, got {0}")]
    LegCount(usize),
    #[error("leg {leg}: segment count {n} outside [5, 7]")]
    SegmentCount { leg: usize, n: usize },
    #[error("non-positive mass: {0}")]
    NonPositiveMass(String),
    #[error("body inertia tensor is not symmetric positive definite")]
    InertiaNotSpd,
    #[error("ground normal is not unit length")]
    GroundNormal,
    #[error("leg {leg}: hysteresis coefficient outside (0, 1]")]
    HysteresisRange { leg: usize },
    #[error("leg {leg}: non-positive base stiffness or damping")]
    NonPositiveGain { leg: usize },
}

impl<S: Scalar> RobotModel<S> {
    /// Total joint count `m = Σ (3 nᵢ + 1)`.
    pub fn joint_count(&self) -> usize {
        self.legs.iter().map(|l| l.joint_count()).sum()
    }

    /// Total robot mass (kg).
    pub fn total_mass(&self) -> S {
        let mut m = self.body_mass;
        for leg in &self.legs {
            m += leg.segment_mass * crate::num::sc(leg.n_segments as f64) + leg.cup_mass;
        }
        m
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.legs.len() != 4 {
            return Err(ModelError::LegCount(self.legs.len()));
        }
        if self.body_mass <= S::zero() {
            return Err(ModelError::NonPositiveMass("body_mass".into()));
        }
        if !is_spd(&self.body_inertia) {
            return Err(ModelError::InertiaNotSpd);
        }
        let tol: S = crate::num::sc(1e-9);
        if (self.ground_normal.norm() - S::one()).abs() > tol {
            return Err(ModelError::GroundNormal);
        }
        for (i, leg) in self.legs.iter().enumerate() {
            if !(5..=7).contains(&leg.n_segments) {
                return Err(ModelError::SegmentCount {
                    leg: i,
                    n: leg.n_segments,
                });
            }
            if leg.segment_mass <= S::zero() || leg.cup_mass <= S::zero() {
                return Err(ModelError::NonPositiveMass(format!("leg {i}")));
            }
            for kind in [
                JointType::RevoluteX,
                JointType::RevoluteY,
                JointType::PrismaticZ,
                JointType::SuctionPrismatic,
            ] {
                if leg.base_stiffness.get(kind) <= S::zero()
                    || leg.base_damping.get(kind) <= S::zero()
                {
                    return Err(ModelError::NonPositiveGain { leg: i });
                }
                let (ae, ac) = (leg.alpha_exp.get(kind), leg.alpha_con.get(kind));
                for a in [ae, ac] {
                    if a <= S::zero() || a > S::one() {
                        return Err(ModelError::HysteresisRange { leg: i });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Symmetric positive definite test via leading principal minors.
fn is_spd<S: Scalar>(m: &Matrix3<S>) -> bool {
    let tol: S = crate::num::sc(1e-12);
    let sym = (m[(0, 1)] - m[(1, 0)]).abs() < tol
        && (m[(0, 2)] - m[(2, 0)]).abs() < tol
        && (m[(1, 2)] - m[(2, 1)]).abs() < tol;
    let d1 = m[(0, 0)];
    let d2 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let d3 = m.determinant();
    sym && d1 > S::zero() && d2 > S::zero() && d3 > S::zero()
}
