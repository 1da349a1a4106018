//! Gravity compensation toolkit for the dVRK-Si Patient Side Manipulator.
//!
//! The crate covers the whole offline pipeline:
//!
//! * [`model`]: coupled modified-DH frame tree and the PSM preset,
//! * [`kinematics`]: forward kinematics, frame rates and task-space poses,
//! * [`dynamics`]: inverse dynamics, the linear regressor and gravity torques,
//! * [`excitation`]: Fourier excitation trajectories and their optimization,
//! * [`identification`]: data preprocessing and the physically constrained solve,
//! * [`gravsim`]: a stiction-aware simulator and the drift-test protocol,
//! * [`io`]: file formats shared by the command-line tool.

pub mod dynamics;
pub mod excitation;
pub mod gravsim;
pub mod identification;
pub mod io;
pub mod kinematics;
pub mod model;

use nalgebra::SVector;

/// Number of actuated coordinates of the manipulator.
pub const N_JOINTS: usize = 7;

/// Vector over the actuated coordinates (rad, joint 3 in m).
pub type JointVector = SVector<f64, N_JOINTS>;

/// Index of the prismatic insertion joint (joint 3, zero-based).
pub const INSERTION_JOINT: usize = 2;

pub use dynamics::ParamVector;
pub use model::ParamLayout;
pub use kinematics::{HomTransform, Pose6, RobotState};
pub use model::ChainModel;
