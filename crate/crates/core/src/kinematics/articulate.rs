use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use super::se3::{rodrigues, rodrigues_derivative};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::urdf::{Joint, JointKind};

/// Learnable joint refinement `(Δt, Δθ)`; `Δt` offsets the parsed joint origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JointDelta {
    pub delta_t: [f64; 3],
    pub delta_theta: f64,
}

impl JointDelta {
    pub fn new(delta_t: Vector3<f64>, delta_theta: f64) -> Self {
        Self {
            delta_t: delta_t.into(),
            delta_theta,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dt(&self) -> Vector3<f64> {
        Vector3::from(self.delta_t)
    }

    /// Packed as `[Δt.x, Δt.y, Δt.z, Δθ]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.delta_t[0], self.delta_t[1], self.delta_t[2], self.delta_theta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            delta_t: [a[0], a[1], a[2]],
            delta_theta: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// The articulation map of one joint at fixed `ξ`, with its derivative in `ξ`.
#[derive(Debug, Clone)]
pub(crate) struct ArticulationJacobian {
    kind: JointKind,
    pivot: Vector3<f64>,
    axis: Vector3<f64>,
    rotation: Matrix3<f64>,
    d_rotation: Matrix3<f64>,
    displacement: Vector3<f64>,
}

impl ArticulationJacobian {
    /// The joint's origin and axis are read in the frame the part vertices live in:
    /// the pivot is `origin.translation + Δt` and the axis is `origin.rotation · axis`.
    pub fn new(joint: &Joint, delta: &JointDelta) -> Result<Self> {
        if !joint.kind.is_movable() {
            return Err(Error::Argument(format!(
                "joint {:?} is fixed and cannot be articulated",
                joint.name
            )));
        }
        let n = joint.axis.norm();
        if !(n > 0.0) {
            return Err(Error::Domain(format!("joint {:?} has a zero axis", joint.name)));
        }
        let axis = joint.origin.rotation * (joint.axis / n);
        let theta = delta.delta_theta;
        Ok(Self {
            kind: joint.kind,
            pivot: joint.origin.translation + delta.dt(),
            axis,
            rotation: rodrigues(&axis, theta),
            d_rotation: rodrigues_derivative(&axis, theta),
            displacement: axis * theta,
        })
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        match self.kind {
            JointKind::Revolute => self.rotation * (v - self.pivot) + self.pivot,
            _ => v + self.displacement,
        }
    }

    /// Moved vertex and `∂v'/∂(Δt, Δθ)`.
    pub fn apply_with_jacobian(&self, v: &Vector3<f64>) -> (Vector3<f64>, Matrix3x4<f64>) {
        let mut jac = Matrix3x4::zeros();
        match self.kind {
            JointKind::Revolute => {
                let rel = v - self.pivot;
                jac.fixed_view_mut::<3, 3>(0, 0)
                    .copy_from(&(Matrix3::identity() - self.rotation));
                jac.fixed_view_mut::<3, 1>(0, 3).copy_from(&(self.d_rotation * rel));
                (self.rotation * rel + self.pivot, jac)
            }
            _ => {
                jac.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.axis);
                (v + self.displacement, jac)
            }
        }
    }
}

/// Move `part` rigidly by joint refinement `delta`; topology is untouched.
pub fn articulate_part(part: &TriMesh, joint: &Joint, delta: &JointDelta) -> Result<TriMesh> {
    let map = ArticulationJacobian::new(joint, delta)?;
    let mut out = part.clone();
    for v in &mut out.vertices {
        *v = map.apply(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Se3Transform;

    fn part() -> TriMesh {
        TriMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.5),
            ],
            vec![[0, 1, 2]],
        )
    }

    fn joint(kind: JointKind, pivot: Vector3<f64>, axis: Vector3<f64>) -> Joint {
        Joint::new("j", kind, "p", "c", Se3Transform::from_translation(pivot), axis)
    }

    #[test]
    fn zero_delta_is_identity() {
        let j = joint(JointKind::Revolute, Vector3::new(0.2, 0.0, 0.0), Vector3::y());
        let out = articulate_part(&part(), &j, &JointDelta::zero()).unwrap();
        assert_eq!(out.vertices, part().vertices);
        assert_eq!(out.faces, part().faces);
    }

    #[test]
    fn pivot_vertex_is_fixed() {
        let j = joint(JointKind::Revolute, Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.3, 1.0, 0.2));
        let out = articulate_part(&part(), &j, &JointDelta::new(Vector3::zeros(), 1.3)).unwrap();
        assert!((out.vertices[1] - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn prismatic_translates_every_vertex() {
        let j = joint(JointKind::Prismatic, Vector3::zeros(), Vector3::z());
        let out = articulate_part(&part(), &j, &JointDelta::new(Vector3::zeros(), 0.3)).unwrap();
        for (a, b) in out.vertices.iter().zip(&part().vertices) {
            let expect = b + Vector3::new(0.0, 0.0, 0.3);
            assert!((a - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn fixed_joint_rejected() {
        let j = joint(JointKind::Fixed, Vector3::zeros(), Vector3::z());
        assert!(matches!(
            articulate_part(&part(), &j, &JointDelta::zero()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut j = joint(JointKind::Revolute, Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.2, 1.0, -0.3));
        j.origin = Se3Transform::from_xyz_rpy(Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.1, 0.2, -0.4));
        let xi = [0.01, -0.02, 0.03, 0.4];
        let v = Vector3::new(0.7, 0.3, -0.2);
        let map = ArticulationJacobian::new(&j, &JointDelta::from_array(xi)).unwrap();
        let (_, jac) = map.apply_with_jacobian(&v);
        let h = 1e-6;
        for k in 0..4 {
            let mut p = xi;
            let mut m = xi;
            p[k] += h;
            m[k] -= h;
            let vp = ArticulationJacobian::new(&j, &JointDelta::from_array(p)).unwrap().apply(&v);
            let vm = ArticulationJacobian::new(&j, &JointDelta::from_array(m)).unwrap().apply(&v);
            let fd = (vp - vm) / (2.0 * h);
            assert!((fd - jac.column(k)).norm() < 1e-8, "column {k}");
        }
    }
}
