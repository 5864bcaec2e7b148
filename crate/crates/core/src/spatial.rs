//! Spatial (6-D) vector algebra for articulated rigid-body dynamics.
//!
//! Motion vectors are `[angular; linear]`, force vectors `[torque; force]`,
//! both expressed at a body-frame origin. Transforms follow the
//! link-coordinate convention: `Xform` carries the coordinate rotation `e`
//! (child = e * parent) and the child origin `r` in parent coordinates.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::num::Scalar;

/// Spatial motion vector `[ω; v]` in some link frame.
pub type MotionVec<S> = Vector6<S>;
/// Spatial force vector `[n; f]` in some link frame.
pub type ForceVec<S> = Vector6<S>;

#[inline]
pub fn skew<S: Scalar>(v: &Vector3<S>) -> Matrix3<S> {
    Matrix3::new(
        S::zero(),
        -v.z,
        v.y,
        v.z,
        S::zero(),
        -v.x,
        -v.y,
        v.x,
        S::zero(),
    )
}

#[inline]
pub fn angular<S: Scalar>(m: &Vector6<S>) -> Vector3<S> {
    Vector3::new(m[0], m[1], m[2])
}

#[inline]
pub fn linear<S: Scalar>(m: &Vector6<S>) -> Vector3<S> {
    Vector3::new(m[3], m[4], m[5])
}

#[inline]
pub fn compose<S: Scalar>(ang: &Vector3<S>, lin: &Vector3<S>) -> Vector6<S> {
    Vector6::new(ang.x, ang.y, ang.z, lin.x, lin.y, lin.z)
}

/// Motion cross product `v ×ₘ m`.
pub fn cross_motion<S: Scalar>(v: &MotionVec<S>, m: &MotionVec<S>) -> MotionVec<S> {
    let (w, vl) = (angular(v), linear(v));
    let (mw, mv) = (angular(m), linear(m));
    compose(&w.cross(&mw), &(w.cross(&mv) + vl.cross(&mw)))
}

/// Force cross product `v ×f f` (dual of `cross_motion`).
pub fn cross_force<S: Scalar>(v: &MotionVec<S>, f: &ForceVec<S>) -> ForceVec<S> {
    let (w, vl) = (angular(v), linear(v));
    let (n, fl) = (angular(f), linear(f));
    compose(&(w.cross(&n) + vl.cross(&fl)), &w.cross(&fl))
}

/// Plücker coordinate transform from a parent frame to a child frame.
#[derive(Debug, Clone, Copy)]
pub struct Xform<S: Scalar> {
    /// Coordinate rotation: `u_child = e * u_parent`.
    pub e: Matrix3<S>,
    /// Child origin expressed in parent coordinates.
    pub r: Vector3<S>,
}

impl<S: Scalar> Xform<S> {
    pub fn identity() -> Self {
        Self {
            e: Matrix3::identity(),
            r: Vector3::zeros(),
        }
    }

    /// Pure rotation: child axes rotated by `rot` relative to parent
    /// (`rot` maps child coordinates into parent coordinates).
    pub fn rotation(rot: Matrix3<S>) -> Self {
        Self {
            e: rot.transpose(),
            r: Vector3::zeros(),
        }
    }

    /// Pure translation of the child origin.
    pub fn translation(r: Vector3<S>) -> Self {
        Self {
            e: Matrix3::identity(),
            r,
        }
    }

    pub fn new(rot_child_to_parent: Matrix3<S>, r: Vector3<S>) -> Self {
        Self {
            e: rot_child_to_parent.transpose(),
            r,
        }
    }

    /// Composition: `self ∘ inner`, transforming grandparent → child when
    /// `inner` transforms grandparent → parent.
    pub fn compose(&self, inner: &Xform<S>) -> Xform<S> {
        Xform {
            e: self.e * inner.e,
            r: inner.r + inner.e.transpose() * self.r,
        }
    }

    /// Motion vector from parent to child coordinates.
    pub fn apply_motion(&self, m: &MotionVec<S>) -> MotionVec<S> {
        let w = angular(m);
        let v = linear(m);
        compose(&(self.e * w), &(self.e * (v - self.r.cross(&w))))
    }

    /// Force vector from child back to parent coordinates.
    pub fn force_to_parent(&self, f: &ForceVec<S>) -> ForceVec<S> {
        let fp = self.e.transpose() * linear(f);
        let np = self.e.transpose() * angular(f) + self.r.cross(&fp);
        compose(&np, &fp)
    }

    /// Dense 6×6 motion matrix (child ← parent).
    pub fn to_matrix(&self) -> Matrix6<S> {
        let mut x = Matrix6::zeros();
        let tl = self.e;
        let bl = -self.e * skew(&self.r);
        for i in 0..3 {
            for j in 0..3 {
                x[(i, j)] = tl[(i, j)];
                x[(i + 3, j)] = bl[(i, j)];
                x[(i + 3, j + 3)] = tl[(i, j)];
            }
        }
        x
    }

    /// Articulated inertia from child to parent coordinates: `Xᵀ I X`.
    pub fn inertia_to_parent(&self, inertia: &Matrix6<S>) -> Matrix6<S> {
        let x = self.to_matrix();
        x.transpose() * inertia * x
    }
}

/// Rigid-body spatial inertia at the body-frame origin.
pub fn spatial_inertia<S: Scalar>(
    mass: S,
    com: &Vector3<S>,
    inertia_com: &Matrix3<S>,
) -> Matrix6<S> {
    let c = skew(com);
    let tl = inertia_com + (c * c.transpose()) * mass;
    let tr = c * mass;
    let bl = tr.transpose();
    let mut i = Matrix6::zeros();
    for a in 0..3 {
        for b in 0..3 {
            i[(a, b)] = tl[(a, b)];
            i[(a, b + 3)] = tr[(a, b)];
            i[(a + 3, b)] = bl[(a, b)];
        }
    }
    i[(3, 3)] = mass;
    i[(4, 4)] = mass;
    i[(5, 5)] = mass;
    i
}

pub fn rot_x<S: Scalar>(q: S) -> Matrix3<S> {
    let (s, c) = (q.sin(), q.cos());
    Matrix3::new(S::one(), S::zero(), S::zero(), S::zero(), c, -s, S::zero(), s, c)
}

pub fn rot_y<S: Scalar>(q: S) -> Matrix3<S> {
    let (s, c) = (q.sin(), q.cos());
    Matrix3::new(c, S::zero(), s, S::zero(), S::one(), S::zero(), -s, S::zero(), c)
}

pub fn rot_z<S: Scalar>(q: S) -> Matrix3<S> {
    let (s, c) = (q.sin(), q.cos());
    Matrix3::new(c, -s, S::zero(), s, c, S::zero(), S::zero(), S::zero(), S::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    #[test]
    fn motion_transform_round_trip_via_matrix() {
        let x: Xform<f64> = Xform::new(rot_z(0.7) * rot_x(-0.2), Vector3::new(0.1, -0.3, 0.5));
        let m = Vector6::new(0.3, -1.0, 2.0, 0.5, 0.4, -0.7);
        let direct = x.apply_motion(&m);
        let via_matrix = x.to_matrix() * m;
        assert_relative_eq!(direct, via_matrix, epsilon = 1e-12);
    }

    #[test]
    fn force_transform_is_inverse_transpose() {
        let x: Xform<f64> = Xform::new(rot_y(1.1), Vector3::new(-0.2, 0.1, 0.4));
        let f = Vector6::new(1.0, 0.2, -0.5, 0.3, -0.9, 0.6);
        // power invariance: fᵀ m must match in both frames
        let m = Vector6::new(-0.4, 0.8, 0.1, 1.2, 0.0, -0.3);
        let m_child = x.apply_motion(&m);
        let f_parent = x.force_to_parent(&f);
        assert_relative_eq!(f.dot(&m_child), f_parent.dot(&m), epsilon = 1e-12);
    }

    #[test]
    fn spatial_inertia_point_mass_kinetic_energy() {
        // point mass offset from origin, pure rotation
        let m = 2.0_f64;
        let c = Vector3::new(0.0, 0.0, 0.5);
        let i = spatial_inertia(m, &c, &nalgebra::Matrix3::zeros());
        let v = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0); // ω about x
        let ke = 0.5 * v.dot(&(i * v));
        // |v_com| = ω r = 0.5, KE = ½ m v² = ½·2·0.25
        assert_relative_eq!(ke, 0.25, epsilon = 1e-12);
    }
}
