//! Indexed triangle meshes: merging, cleanup, watertightness, surface sampling,
//! rigid ICP alignment and OBJ I/O.

mod cleanup;
mod icp;
pub(crate) mod kdtree;
mod obj;
mod sample;
mod simplify;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::kinematics::Se3Transform;

pub use cleanup::{cleanup, cleanup_with_report, is_watertight, CleanupOptions, CleanupReport};
pub use icp::{icp_align, IcpOptions, IcpResult};
pub use obj::{parse_obj, read_obj, write_obj, write_obj_string};
pub use sample::{sample_surface, sample_surface_indexed, OrientedPointSet};
pub use simplify::simplify;

/// Face color assigned to merged parts.
pub const MERGE_GRAY: [u8; 4] = [128, 128, 128, 255];

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Optional per-vertex normals, same length as `vertices` when present.
    pub normals: Option<Vec<Vector3<f64>>>,
    pub face_color: [u8; 4],
}

impl Default for TriMesh {
    fn default() -> Self {
        Self::new(Vec::new(), Vec::new())
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            vertices,
            faces,
            normals: None,
            face_color: [255, 255, 255, 255],
        }
    }

    /// Closed, outward-oriented axis-aligned box.
    pub fn cuboid(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        let vertices = (0..8)
            .map(|i| {
                Vector3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let faces = vec![
            [0, 2, 3], [0, 3, 1],
            [4, 5, 7], [4, 7, 6],
            [0, 1, 5], [0, 5, 4],
            [2, 6, 7], [2, 7, 3],
            [0, 4, 6], [0, 6, 2],
            [1, 3, 7], [1, 7, 5],
        ];
        Self::new(vertices, faces)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Check that every face index is in range.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::Structural(format!("face {f:?} indexes past {n} vertices")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::Structural("normal count differs from vertex count".into()));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, f: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Non-normalized face normal (twice the area vector).
    pub fn face_cross(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for closed meshes with outward normals).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])))
            .sum::<f64>()
            / 6.0
    }

    /// Axis-aligned bounds over referenced and unreferenced vertices alike.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    pub fn extents(&self) -> Option<Vector3<f64>> {
        self.bounds().map(|(lo, hi)| hi - lo)
    }

    pub fn center(&self) -> Option<Vector3<f64>> {
        self.bounds().map(|(lo, hi)| (lo + hi) * 0.5)
    }

    pub fn transformed(&self, t: &Se3Transform) -> TriMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = t.transform_point(v);
        }
        if let Some(normals) = &mut out.normals {
            for n in normals {
                *n = t.transform_vector(n);
            }
        }
        out
    }

    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> TriMesh {
        let mut out = self.clone();
        out.normals = None;
        for v in &mut out.vertices {
            *v = f(v);
        }
        out
    }
}

/// Concatenate parts: vertices in order, each face block offset by the vertex count
/// of the parts before it. The result is uniformly gray and otherwise unprocessed.
pub fn merge_meshes(parts: &[TriMesh]) -> Result<TriMesh> {
    if parts.is_empty() {
        return Err(Error::Argument("cannot merge an empty list of meshes".into()));
    }
    let total_v = parts.iter().map(|p| p.vertices.len()).sum();
    let total_f = parts.iter().map(|p| p.faces.len()).sum();
    let mut vertices = Vec::with_capacity(total_v);
    let mut faces = Vec::with_capacity(total_f);
    for part in parts {
        let offset = vertices.len();
        vertices.extend_from_slice(&part.vertices);
        faces.extend(part.faces.iter().map(|f| f.map(|i| i + offset)));
    }
    let normals = if parts.iter().all(|p| p.normals.is_some()) {
        Some(parts.iter().flat_map(|p| p.normals.clone().unwrap()).collect())
    } else {
        None
    };
    Ok(TriMesh {
        vertices,
        faces,
        normals,
        face_color: MERGE_GRAY,
    })
}
