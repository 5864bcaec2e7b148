//! Desk-scale simulation and staged-learning stack for a pneumatically
//! actuated soft quadruped with tactile suction feet.
//!
//! The numeric core (spatial algebra, tree dynamics, actuation laws,
//! networks) is generic over [`num::Scalar`]; the environment, training
//! pipeline, and CLI run on the `f64` aliases below.

pub mod config;
pub mod contact;
pub mod env;
pub mod gait;
pub mod learn;
pub mod model;
pub mod nn;
pub mod num;
pub mod pneumatics;
pub mod rigid_tree;
pub mod sim;
pub mod spatial;
pub mod tactile;

pub use num::Scalar;

/// Default scalar for simulation and training.
pub type F = f64;

pub type Vec3 = nalgebra::Vector3<F>;
pub type Vec6 = nalgebra::Vector6<F>;
pub type Mat3 = nalgebra::Matrix3<F>;
pub type DVec = nalgebra::DVector<F>;

pub type Mlp = nn::Mlp<F>;
pub type RobotModel = model::RobotModel<F>;
pub type LegModel = model::LegModel<F>;
pub type TreeDescription = rigid_tree::TreeDescription<F>;
pub type TreeState = rigid_tree::TreeState<F>;
