//! Articulated-body forward dynamics with semi-implicit Euler integration.

use nalgebra::{DVector, Matrix6, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use super::builder::TreeDescription;
use super::state::TreeState;
use crate::model::JointType;
use crate::num::{sc, Scalar};
use crate::spatial::{compose, cross_force, cross_motion, ForceVec, MotionVec, Xform};
use crate::spatial::{rot_x, rot_y};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite state entry at joint {joint}")]
    NonFinite { joint: usize },
    #[error("non-finite floating-base state")]
    NonFiniteBase,
    #[error("singular articulated inertia at joint {joint}")]
    SingularInertia { joint: usize },
    #[error("torque vector length {got}, expected {expected}")]
    TorqueLength { got: usize, expected: usize },
    #[error("external force list length {got}, expected {expected}")]
    ExternalLength { got: usize, expected: usize },
    #[error("dt must be positive")]
    NonPositiveDt,
}

fn joint_transform<S: Scalar>(kind: JointType, q: S) -> (Xform<S>, MotionVec<S>) {
    match kind {
        JointType::RevoluteX => (
            Xform::rotation(rot_x(q)),
            Vector6::new(S::one(), S::zero(), S::zero(), S::zero(), S::zero(), S::zero()),
        ),
        JointType::RevoluteY => (
            Xform::rotation(rot_y(q)),
            Vector6::new(S::zero(), S::one(), S::zero(), S::zero(), S::zero(), S::zero()),
        ),
        JointType::PrismaticZ | JointType::SuctionPrismatic => (
            Xform::translation(Vector3::new(S::zero(), S::zero(), q)),
            Vector6::new(S::zero(), S::zero(), S::zero(), S::zero(), S::zero(), S::one()),
        ),
    }
}

/// Forward dynamics (articulated-body algorithm).
///
/// `ext_forces[0]` acts on the base, `ext_forces[i+1]` on body `i`, all in
/// the respective body coordinates. `joint_compliance`, when given, is added
/// to the per-joint articulated inertia `D` (implicit spring-damper terms).
/// Returns (base acceleration in base coordinates, joint accelerations).
fn aba<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &TreeState<S>,
    torques: &DVector<S>,
    ext_forces: &[ForceVec<S>],
    joint_compliance: Option<&DVector<S>>,
) -> Result<(Vector6<S>, DVector<S>), SimError> {
    let n = tree.bodies.len();
    let mut x_lambda: Vec<Xform<S>> = Vec::with_capacity(n);
    let mut axis: Vec<MotionVec<S>> = Vec::with_capacity(n);
    let mut v: Vec<MotionVec<S>> = Vec::with_capacity(n);
    let mut c_bias: Vec<MotionVec<S>> = Vec::with_capacity(n);
    let mut rot_w: Vec<nalgebra::Matrix3<S>> = Vec::with_capacity(n);
    let mut ia: Vec<Matrix6<S>> = Vec::with_capacity(n);
    let mut pa: Vec<ForceVec<S>> = Vec::with_capacity(n);

    let base_rot = state.base_quat.to_rotation_matrix().into_inner();
    let v0 = state.base_twist;

    // pass 1: velocities, bias terms, gravity and external forces
    for (i, body) in tree.bodies.iter().enumerate() {
        let (xj, s_i) = joint_transform(body.kind, state.q[i]);
        let xl = xj.compose(&body.xtree);
        let v_parent = match body.parent {
            Some(p) => v[p],
            None => v0,
        };
        let vj = s_i * state.qd[i];
        let v_i = xl.apply_motion(&v_parent) + vj;
        let r_parent = match body.parent {
            Some(p) => rot_w[p],
            None => base_rot,
        };
        let r_i = r_parent * xl.e.transpose();
        let g_body = r_i.transpose() * tree.gravity;
        let f_grav = body.inertia * compose(&Vector3::zeros(), &g_body);
        let p_i = cross_force(&v_i, &(body.inertia * v_i)) - f_grav - ext_forces[i + 1];

        x_lambda.push(xl);
        axis.push(s_i);
        c_bias.push(cross_motion(&v_i, &vj));
        rot_w.push(r_i);
        v.push(v_i);
        ia.push(body.inertia);
        pa.push(p_i);
    }

    let g_base = base_rot.transpose() * tree.gravity;
    let f_grav_base = tree.base_inertia * compose(&Vector3::zeros(), &g_base);
    let mut ia0 = tree.base_inertia;
    let mut pa0 = cross_force(&v0, &(tree.base_inertia * v0)) - f_grav_base - ext_forces[0];

    // pass 2: articulated inertias inward
    let mut u_vec: Vec<ForceVec<S>> = vec![Vector6::zeros(); n];
    let mut d_inv: Vec<S> = vec![S::zero(); n];
    let mut u_bias: Vec<S> = vec![S::zero(); n];
    for i in (0..n).rev() {
        let u_i = ia[i] * axis[i];
        let mut d = axis[i].dot(&u_i);
        if let Some(c) = joint_compliance {
            d += c[i];
        }
        if d <= sc(1e-12) {
            return Err(SimError::SingularInertia { joint: i });
        }
        let di = S::one() / d;
        let ub = torques[i] - axis[i].dot(&pa[i]);
        let ia_a = ia[i] - (u_i * u_i.transpose()) * di;
        let pa_a = pa[i] + ia_a * c_bias[i] + u_i * (ub * di);
        match tree.bodies[i].parent {
            Some(p) => {
                ia[p] += x_lambda[i].inertia_to_parent(&ia_a);
                pa[p] += x_lambda[i].force_to_parent(&pa_a);
            }
            None => {
                ia0 += x_lambda[i].inertia_to_parent(&ia_a);
                pa0 += x_lambda[i].force_to_parent(&pa_a);
            }
        }
        u_vec[i] = u_i;
        d_inv[i] = di;
        u_bias[i] = ub;
    }

    // pass 3: accelerations outward
    let a0 = if tree.fixed_base {
        Vector6::zeros()
    } else {
        let chol = ia0
            .cholesky()
            .ok_or(SimError::SingularInertia { joint: usize::MAX })?;
        chol.solve(&(-pa0))
    };

    let mut a: Vec<MotionVec<S>> = vec![Vector6::zeros(); n];
    let mut qdd = DVector::zeros(n);
    for i in 0..n {
        let a_parent = match tree.bodies[i].parent {
            Some(p) => a[p],
            None => a0,
        };
        let a_i = x_lambda[i].apply_motion(&a_parent) + c_bias[i];
        let qdd_i = d_inv[i] * (u_bias[i] - u_vec[i].dot(&a_i));
        a[i] = a_i + axis[i] * qdd_i;
        qdd[i] = qdd_i;
    }

    Ok((a0, qdd))
}

// velocity first, then positions with the step-averaged velocity
// (Störmer–Verlet form; exact for constant acceleration)
fn integrate_base<S: Scalar>(state: &mut TreeState<S>, base_acc: &Vector6<S>, dt: S) {
    let old = state.base_twist;
    state.base_twist += base_acc * dt;
    let half: S = sc(0.5);
    let avg = (old + state.base_twist) * half;
    let w = Vector3::new(avg[0], avg[1], avg[2]);
    let vl = Vector3::new(avg[3], avg[4], avg[5]);
    let rot = state.base_quat.to_rotation_matrix();
    state.base_pos += rot * vl * dt;
    state.base_quat *= UnitQuaternion::from_scaled_axis(w * dt);
    state.base_quat.renormalize();
}

fn check_finite<S: Scalar>(state: &TreeState<S>) -> Result<(), SimError> {
    for i in 0..state.q.len() {
        if !state.q[i].is_finite() || !state.qd[i].is_finite() {
            return Err(SimError::NonFinite { joint: i });
        }
    }
    if !state.base_pos.iter().all(|x| x.is_finite())
        || !state.base_twist.iter().all(|x| x.is_finite())
        || !state.base_quat.coords.iter().all(|x| x.is_finite())
    {
        return Err(SimError::NonFiniteBase);
    }
    Ok(())
}

/// Advances the tree one step under gravity, joint torques, and external
/// wrenches (semi-implicit Euler: velocities first, then positions).
pub fn step_dynamics<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &mut TreeState<S>,
    torques: &DVector<S>,
    ext_forces: &[ForceVec<S>],
    dt: S,
) -> Result<(), SimError> {
    if dt <= S::zero() {
        return Err(SimError::NonPositiveDt);
    }
    let n = tree.bodies.len();
    if torques.len() != n {
        return Err(SimError::TorqueLength {
            got: torques.len(),
            expected: n,
        });
    }
    if ext_forces.len() != n + 1 {
        return Err(SimError::ExternalLength {
            got: ext_forces.len(),
            expected: n + 1,
        });
    }

    let (a0, qdd) = aba(tree, state, torques, ext_forces, None)?;
    let qd_old = state.qd.clone();
    state.qd += qdd * dt;
    state.q += (&state.qd + qd_old) * (dt * sc::<S>(0.5));
    if !tree.fixed_base {
        integrate_base(state, &a0, dt);
    }
    state.sim_time += dt;
    check_finite(state)
}

/// Per-joint PD setpoint integrated implicitly.
///
/// The spring-damper torque `k_p (q_cmd − q) − k_d q̇` is evaluated at the
/// end-of-step state, which keeps stiff joints stable at the physics step
/// regardless of their apparent inertia.
pub struct JointPd<'a, S: Scalar> {
    pub q_cmd: &'a DVector<S>,
    pub k_p: &'a DVector<S>,
    pub k_d: &'a DVector<S>,
}

/// Advances the tree one step with implicit joint PD plus explicit external
/// wrenches. `torques` are additional feedforward joint torques.
pub fn step_dynamics_pd<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &mut TreeState<S>,
    pd: &JointPd<'_, S>,
    torques: &DVector<S>,
    ext_forces: &[ForceVec<S>],
    dt: S,
) -> Result<(), SimError> {
    if dt <= S::zero() {
        return Err(SimError::NonPositiveDt);
    }
    let n = tree.bodies.len();
    if torques.len() != n || pd.q_cmd.len() != n || pd.k_p.len() != n || pd.k_d.len() != n {
        return Err(SimError::TorqueLength {
            got: torques.len().min(pd.q_cmd.len()),
            expected: n,
        });
    }
    if ext_forces.len() != n + 1 {
        return Err(SimError::ExternalLength {
            got: ext_forces.len(),
            expected: n + 1,
        });
    }

    // τ(q_new, qd_new) linearized in qdd: the qdd coefficient joins the
    // articulated inertia D, the rest is an explicit torque
    let mut tau_eff = torques.clone();
    let mut compliance = DVector::zeros(n);
    for i in 0..n {
        let kp = pd.k_p[i];
        let kd = pd.k_d[i];
        tau_eff[i] += kp * (pd.q_cmd[i] - state.q[i]) - (kd + kp * dt) * state.qd[i];
        compliance[i] = (kd + kp * dt) * dt;
    }

    let (a0, qdd) = aba(tree, state, &tau_eff, ext_forces, Some(&compliance))?;
    let qd_old = state.qd.clone();
    state.qd += qdd * dt;
    state.q += (&state.qd + qd_old) * (dt * sc::<S>(0.5));
    if !tree.fixed_base {
        integrate_base(state, &a0, dt);
    }
    state.sim_time += dt;
    check_finite(state)
}

/// Rigid-limit step: all joints clamped, only the base integrates under
/// the composite inertia of the whole tree (the stiffness → ∞ limit).
pub fn step_dynamics_locked<S: Scalar>(
    tree: &TreeDescription<S>,
    state: &mut TreeState<S>,
    ext_forces: &[ForceVec<S>],
    dt: S,
) -> Result<(), SimError> {
    if dt <= S::zero() {
        return Err(SimError::NonPositiveDt);
    }
    let n = tree.bodies.len();
    if ext_forces.len() != n + 1 {
        return Err(SimError::ExternalLength {
            got: ext_forces.len(),
            expected: n + 1,
        });
    }

    let base_rot = state.base_quat.to_rotation_matrix().into_inner();
    // accumulate composite inertia and applied forces in base coordinates
    let mut x_base: Vec<Xform<S>> = Vec::with_capacity(n);
    let mut i_comp = tree.base_inertia;
    let g_base = base_rot.transpose() * tree.gravity;
    let mut f_total =
        tree.base_inertia * compose(&Vector3::zeros(), &g_base) + ext_forces[0];
    for (i, body) in tree.bodies.iter().enumerate() {
        let (xj, _) = joint_transform(body.kind, state.q[i]);
        let xl = xj.compose(&body.xtree);
        let xb = match body.parent {
            Some(p) => xl.compose(&x_base[p]),
            None => xl,
        };
        i_comp += xb.inertia_to_parent(&body.inertia);
        let r_i = base_rot * xb.e.transpose();
        let g_body = r_i.transpose() * tree.gravity;
        let f_i = body.inertia * compose(&Vector3::zeros(), &g_body) + ext_forces[i + 1];
        f_total += xb.force_to_parent(&f_i);
        x_base.push(xb);
    }

    let v0 = state.base_twist;
    let rhs = f_total - cross_force(&v0, &(i_comp * v0));
    let a0 = i_comp
        .cholesky()
        .ok_or(SimError::SingularInertia { joint: usize::MAX })?
        .solve(&rhs);

    state.qd.fill(S::zero());
    if !tree.fixed_base {
        integrate_base(state, &a0, dt);
    }
    state.sim_time += dt;
    check_finite(state)
}
