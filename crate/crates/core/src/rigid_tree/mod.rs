//! Reduced-coordinate dynamics of the floating base plus four leg chains.

mod builder;
mod dynamics;
mod kinematics;
mod state;

pub use builder::{build_tree, BodyDesc, TreeDescription};
pub use dynamics::{step_dynamics, step_dynamics_locked, step_dynamics_pd, JointPd, SimError};
pub use kinematics::{
    body_kinematics, center_of_mass, foot_frames, forward_kinematics, linear_momentum,
    mechanism_energy, BodyFrame, BodyPose, FootFrame,
};
pub use state::TreeState;
