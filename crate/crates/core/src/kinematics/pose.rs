use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::fk::JointConfiguration;
use crate::error::{Error, Result};
use crate::urdf::{JointKind, UrdfModel};

/// Upper limit assumed for revolute joints without `<limit upper>`.
pub const DEFAULT_REVOLUTE_UPPER: f64 = PI;
/// Upper limit assumed for prismatic joints without `<limit upper>` (scene units).
pub const DEFAULT_PRISMATIC_UPPER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseMode {
    Reference,
    Mid,
    Max,
}

impl PoseMode {
    pub const ALL: [PoseMode; 3] = [PoseMode::Reference, PoseMode::Mid, PoseMode::Max];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoseMode::Reference => "reference",
            PoseMode::Mid => "mid",
            PoseMode::Max => "max",
        }
    }
}

impl FromStr for PoseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" | "ref" => Ok(PoseMode::Reference),
            "mid" => Ok(PoseMode::Mid),
            "max" => Ok(PoseMode::Max),
            other => Err(Error::Argument(format!("unknown pose mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoseOptions {
    /// Drive prismatic joints too (otherwise they stay at zero).
    pub include_prismatic: bool,
}

/// Joint values for the reference, mid or max pose of every movable joint.
pub fn sample_pose(model: &UrdfModel, mode: PoseMode, options: &PoseOptions) -> JointConfiguration {
    let mut cfg = JointConfiguration::new();
    for joint in &model.joints {
        let default_upper = match joint.kind {
            JointKind::Fixed => continue,
            JointKind::Revolute => DEFAULT_REVOLUTE_UPPER,
            JointKind::Prismatic => DEFAULT_PRISMATIC_UPPER,
        };
        let driven = joint.kind == JointKind::Revolute || options.include_prismatic;
        let upper = joint.limit_upper.unwrap_or(default_upper);
        let value = match (mode, driven) {
            (PoseMode::Reference, _) | (_, false) => 0.0,
            (PoseMode::Mid, true) => 0.5 * upper,
            (PoseMode::Max, true) => upper,
        };
        cfg.set(joint.name.clone(), value);
    }
    cfg
}

/// Per-object normalization `p ↦ s·(p + t)`, computed once from the reference pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub t: [f64; 3],
    pub s: f64,
}

impl Normalization {
    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.t)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p + self.translation()) * self.s
    }
}

/// `t = −center`, `s = 2 / max(extents)`.
pub fn normalization_from_reference(center: Vector3<f64>, extents: Vector3<f64>) -> Result<Normalization> {
    if extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!(
            "reference extents must be strictly positive, got {:?}",
            extents.as_slice()
        )));
    }
    Ok(Normalization {
        t: (-center).into(),
        s: 2.0 / extents.max(),
    })
}

pub fn normalization_from_bbox(min: Vector3<f64>, max: Vector3<f64>) -> Result<Normalization> {
    normalization_from_reference((min + max) * 0.5, max - min)
}
