use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;
use crate::error::{Error, Result};

/// Surface points with unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientedPointSet {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl OrientedPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-weighted uniform surface samples; deterministic for a given seed.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<OrientedPointSet> {
    sample_surface_indexed(mesh, count, seed).map(|(s, _)| s)
}

/// As [`sample_surface`], also returning the source face of every sample.
pub fn sample_surface_indexed(mesh: &TriMesh, count: usize, seed: u64) -> Result<(OrientedPointSet, Vec<usize>)> {
    if count == 0 {
        return Ok((OrientedPointSet::default(), Vec::new()));
    }
    mesh.validate()?;
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Domain("cannot sample a mesh with zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = OrientedPointSet {
        points: Vec::with_capacity(count),
        normals: Vec::with_capacity(count),
    };
    let mut face_ids = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        out.points.push(p);
        out.normals.push(mesh.face_cross(f).normalize());
        face_ids.push(f);
    }
    Ok((out, face_ids))
}
