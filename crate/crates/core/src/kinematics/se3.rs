//! Rigid transforms and rotation constructors.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Se3Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Se3Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se3Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// URDF `<origin xyz rpy>`.
    pub fn from_xyz_rpy(xyz: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        Self::new(rotation_from_rpy(rpy), xyz)
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Se3Transform) -> Se3Transform {
        Se3Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Se3Transform {
        let rt = self.rotation.transpose();
        Se3Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Roll-pitch-yaw angles of the rotation part (inverse of [`rotation_from_rpy`]).
    pub fn rpy(&self) -> Vector3<f64> {
        rpy_from_rotation(&self.rotation)
    }

    /// Largest absolute entry difference between the homogeneous matrices.
    pub fn max_abs_diff(&self, other: &Se3Transform) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).abs().max()
    }
}

/// Rotation for URDF roll-pitch-yaw: `Rz(yaw)·Ry(pitch)·Rx(roll)` (fixed axes X, Y, Z).
pub fn rotation_from_rpy(rpy: Vector3<f64>) -> Matrix3<f64> {
    let (sr, cr) = rpy.x.sin_cos();
    let (sp, cp) = rpy.y.sin_cos();
    let (sy, cy) = rpy.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Recover roll-pitch-yaw from a rotation matrix. At gimbal lock the roll absorbs
/// the free angle and yaw is reported as zero.
pub fn rpy_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let sp = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    let cp = (r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)]).sqrt();
    if cp > 1e-10 {
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Vector3::new(roll, pitch, yaw)
    } else {
        // yaw folded into roll
        let roll = if sp > 0.0 {
            r[(0, 1)].atan2(r[(1, 1)])
        } else {
            (-r[(0, 1)]).atan2(r[(1, 1)])
        };
        Vector3::new(roll, pitch, 0.0)
    }
}

/// Rodrigues rotation about `axis` (normalized internally) by `angle` radians.
pub fn rotation_axis_angle(axis: Vector3<f64>, angle: f64) -> Result<Matrix3<f64>> {
    let norm = axis.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Domain(format!(
            "rotation axis must be nonzero and finite, got {:?}",
            axis.as_slice()
        )));
    }
    Ok(rodrigues(&(axis / norm), angle))
}

/// Rodrigues formula for an already-normalized axis.
pub(crate) fn rodrigues(k: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * s + kx * kx * (1.0 - c)
}

/// Derivative of [`rodrigues`] with respect to the angle.
pub(crate) fn rodrigues_derivative(k: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let kx = k.cross_matrix();
    kx * c + kx * kx * s
}
