//! Assemble per-link meshes into a posed, normalized object and express joints in
//! that normalized world frame.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, normalization_from_bbox, FkResult, JointConfiguration, JointDelta, Normalization, Se3Transform,
};
use crate::mesh::TriMesh;
use crate::urdf::{Joint, UrdfModel};

fn link_index(model: &UrdfModel, name: &str) -> Result<usize> {
    model
        .links
        .iter()
        .position(|l| l.name == name)
        .ok_or_else(|| Error::Structural(format!("unknown link {name:?}")))
}

/// Place every part (keyed by link name) with its link's visual transform.
pub fn assemble(
    model: &UrdfModel,
    parts: &BTreeMap<String, TriMesh>,
    config: &JointConfiguration,
) -> Result<Vec<(String, TriMesh)>> {
    let fk = forward_kinematics(model, config)?;
    place(model, &fk, parts)
}

fn place(model: &UrdfModel, fk: &FkResult, parts: &BTreeMap<String, TriMesh>) -> Result<Vec<(String, TriMesh)>> {
    parts
        .iter()
        .map(|(name, mesh)| {
            let i = link_index(model, name)?;
            Ok((name.clone(), mesh.transformed(&fk.visual_world[i])))
        })
        .collect()
}

/// Bounding box over all vertices of all meshes.
pub fn scene_bounds<'a>(meshes: impl IntoIterator<Item = &'a TriMesh>) -> Option<(Vector3<f64>, Vector3<f64>)> {
    meshes.into_iter().filter_map(|m| m.bounds()).reduce(|(lo, hi), (l, h)| (lo.inf(&l), hi.sup(&h)))
}

/// Normalization computed from the assembled reference pose.
pub fn reference_normalization(model: &UrdfModel, parts: &BTreeMap<String, TriMesh>) -> Result<Normalization> {
    let placed = assemble(model, parts, &JointConfiguration::new())?;
    let (lo, hi) = scene_bounds(placed.iter().map(|(_, m)| m))
        .ok_or_else(|| Error::Processing("object has no geometry".into()))?;
    normalization_from_bbox(lo, hi)
}

pub fn normalize_mesh(mesh: &TriMesh, n: &Normalization) -> TriMesh {
    mesh.map_vertices(|v| n.apply(v))
}

/// A posed object split into the parts moved by one joint and everything else.
#[derive(Debug, Clone)]
pub struct JointScene {
    pub static_parts: Vec<TriMesh>,
    /// Union of the meshes in the joint's child subtree.
    pub moving_part: TriMesh,
    /// The joint with its frame expressed in the normalized world.
    pub world_joint: Joint,
    /// Rotation of the joint's parent frame in world coordinates.
    parent_rotation: nalgebra::Matrix3<f64>,
    scale: f64,
}

impl JointScene {
    /// Split the normalized reference pose around `joint_name`.
    pub fn new(
        model: &UrdfModel,
        parts: &BTreeMap<String, TriMesh>,
        joint_name: &str,
        normalization: &Normalization,
    ) -> Result<Self> {
        let joint = model
            .joint(joint_name)
            .ok_or_else(|| Error::Argument(format!("unknown joint {joint_name:?}")))?;
        if !joint.kind.is_movable() {
            return Err(Error::Argument(format!("joint {joint_name:?} is fixed")));
        }
        let fk = forward_kinematics(model, &JointConfiguration::new())?;
        let subtree = model.subtree_links(&joint.child);
        let mut moving = Vec::new();
        let mut static_parts = Vec::new();
        for (name, mesh) in place(model, &fk, parts)? {
            let mesh = normalize_mesh(&mesh, normalization);
            if subtree.contains(&name) {
                moving.push(mesh);
            } else {
                static_parts.push(mesh);
            }
        }
        if moving.is_empty() {
            return Err(Error::Argument(format!("joint {joint_name:?} moves no geometry")));
        }
        let parent_vis = fk.visual_world[link_index(model, &joint.parent)?];
        let frame = parent_vis.compose(&joint.origin);
        let mut world_joint = joint.clone();
        world_joint.origin = Se3Transform::new(frame.rotation, normalization.apply(&frame.translation));
        let mut moving_part = crate::mesh::merge_meshes(&moving)?;
        moving_part.face_color = moving[0].face_color;
        Ok(Self {
            static_parts,
            moving_part,
            world_joint,
            parent_rotation: parent_vis.rotation,
            scale: normalization.s,
        })
    }

    /// The joint-origin offset, in the parent frame and scene units, equivalent to
    /// moving the normalized world pivot by `delta.delta_t`.
    pub fn origin_offset(&self, delta: &JointDelta) -> Vector3<f64> {
        self.parent_rotation.transpose() * (delta.dt() / self.scale)
    }
}
