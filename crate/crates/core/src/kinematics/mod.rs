//! Rigid transforms, visual-space forward kinematics, pose sampling,
//! per-object normalization and the single-joint articulation map used by the
//! optimizer.

mod articulate;
mod fk;
mod pose;
mod se3;

pub use articulate::{articulate_part, JointDelta};
pub(crate) use articulate::ArticulationJacobian;
pub use fk::{forward_kinematics, reference_link, representative_visual, FkResult, JointConfiguration};
pub use pose::{
    normalization_from_bbox, normalization_from_reference, sample_pose, Normalization, PoseMode,
    PoseOptions, DEFAULT_PRISMATIC_UPPER, DEFAULT_REVOLUTE_UPPER,
};
pub use se3::{rotation_axis_angle, rotation_from_rpy, rpy_from_rotation, Se3Transform};
