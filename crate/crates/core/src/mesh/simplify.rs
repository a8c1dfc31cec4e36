//! Error-bounded quadric simplification, used to build light render proxies.

use meshopt::{simplify_decoder, SimplifyOptions};

use super::TriMesh;
use crate::error::{Error, Result};

/// Collapse edges while the geometric deviation stays below `max_error` (mesh
/// units). Unreferenced vertices are dropped; normals are not carried over.
pub fn simplify(mesh: &TriMesh, max_error: f64) -> Result<TriMesh> {
    if !(max_error >= 0.0) || !max_error.is_finite() {
        return Err(Error::Argument(format!("max_error must be finite and nonnegative, got {max_error}")));
    }
    mesh.validate()?;
    if mesh.faces.is_empty() || max_error == 0.0 {
        return Ok(mesh.clone());
    }
    let positions: Vec<[f32; 3]> = mesh.vertices.iter().map(|v| [v.x as f32, v.y as f32, v.z as f32]).collect();
    let indices: Vec<u32> = mesh.faces.iter().flatten().map(|&i| i as u32).collect();
    let kept = simplify_decoder(&indices, &positions, 0, max_error as f32, SimplifyOptions::ErrorAbsolute, None);

    let mut remap = vec![usize::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let faces = kept
        .chunks_exact(3)
        .map(|t| {
            [0, 1, 2].map(|k| {
                let i = t[k] as usize;
                if remap[i] == usize::MAX {
                    remap[i] = vertices.len();
                    vertices.push(mesh.vertices[i]);
                }
                remap[i]
            })
        })
        .collect();
    let mut out = TriMesh::new(vertices, faces);
    out.face_color = mesh.face_color;
    Ok(out)
}
