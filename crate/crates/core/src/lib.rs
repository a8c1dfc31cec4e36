//! Toolkit for single-image articulated-object reconstruction, non-learned core:
//! URDF handling, part merging, watertight preprocessing, kinematics, soft
//! silhouette rendering, joint refinement, attention/flow reference math and
//! evaluation metrics.

pub mod attention;
pub mod cli;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod mesh;
pub mod optimize;
pub mod render;
pub mod scene;
pub mod urdf;
pub mod voxel;

pub use error::{Error, Result};
