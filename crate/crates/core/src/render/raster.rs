use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{Camera, Projector};
use super::image::SilhouetteImage;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

pub const DEFAULT_BLUR_SIGMA: f64 = 1.5;
/// Faces influence pixels up to this many blur widths outside their projection.
pub(crate) const REACH: f64 = 6.0;
/// Width of the fade-out band at the edge of the reach, in blur widths.
const FADE: f64 = 2.0;
const NEAR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftRasterSettings {
    /// Softness of the edge sigmoid, in pixels.
    pub blur_sigma: f64,
}

impl Default for SoftRasterSettings {
    fn default() -> Self {
        Self {
            blur_sigma: DEFAULT_BLUR_SIGMA,
        }
    }
}

impl SoftRasterSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma > 0.0) || !self.blur_sigma.is_finite() {
            return Err(Error::Argument(format!("blur sigma must be positive, got {}", self.blur_sigma)));
        }
        Ok(())
    }
}

/// A front-facing triangle in pixel coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScreenTriangle {
    pub p: [Vector2<f64>; 3],
    /// Pixel index bounds (inclusive) of the influence region, clipped to the image.
    pub cols: (usize, usize),
    pub rows: (usize, usize),
}

/// Project the faces of `vertices`/`faces`, dropping faces behind the camera,
/// back-facing or edge-on faces and faces whose influence misses the image.
/// Returns the source face index with each screen triangle.
pub(crate) fn project_faces(
    camera: &Camera,
    projector: &Projector,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    sigma: f64,
) -> Vec<(usize, ScreenTriangle)> {
    let cam: Vec<Vector3<f64>> = vertices.iter().map(|v| projector.to_camera(v)).collect();
    let reach = REACH * sigma;
    let mut out = Vec::new();
    for (fi, f) in faces.iter().enumerate() {
        let c = [cam[f[0]], cam[f[1]], cam[f[2]]];
        if c.iter().any(|v| v.z <= NEAR) {
            continue;
        }
        let p = c.map(|v| projector.to_pixel(&v));
        // image rows grow downwards, so front faces wind clockwise on screen
        if cross2(&(p[1] - p[0]), &(p[2] - p[0])) >= 0.0 {
            continue;
        }
        let lo = p[0].inf(&p[1]).inf(&p[2]).add_scalar(-reach);
        let hi = p[0].sup(&p[1]).sup(&p[2]).add_scalar(reach);
        let (w, h) = (camera.width as f64, camera.height as f64);
        if hi.x < 0.5 || hi.y < 0.5 || lo.x > w - 0.5 || lo.y > h - 0.5 {
            continue;
        }
        let first = |x: f64| (x - 0.5).ceil().max(0.0) as usize;
        let last = |x: f64, n: f64| ((x - 0.5).floor().min(n - 1.0)) as usize;
        out.push((
            fi,
            ScreenTriangle {
                p,
                cols: (first(lo.x), last(hi.x, w)),
                rows: (first(lo.y), last(hi.y, h)),
            },
        ));
    }
    out
}

#[inline]
fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed distance from `q` to a clockwise screen triangle, positive inside, with
/// its derivative with respect to each triangle corner.
pub(crate) fn signed_distance(q: &Vector2<f64>, p: &[Vector2<f64>; 3]) -> (f64, [Vector2<f64>; 3]) {
    let mut best = f64::INFINITY;
    let mut grad = [Vector2::zeros(); 3];
    let mut inside = true;
    for i in 0..3 {
        let (a, b) = (p[i], p[(i + 1) % 3]);
        let ab = b - a;
        if cross2(&ab, &(q - a)) > 0.0 {
            inside = false;
        }
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 { ((q - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let diff = q - (a + ab * t);
        let dist = diff.norm();
        if dist < best {
            best = dist;
            let n = if dist > 0.0 { diff / dist } else { Vector2::zeros() };
            grad = [Vector2::zeros(); 3];
            grad[i] = -n * (1.0 - t);
            grad[(i + 1) % 3] = -n * t;
        }
    }
    if inside {
        (best, grad)
    } else {
        (-best, grad.map(|g| -g))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-face coverage `a`, its complement `1 - a` computed without cancellation, and
/// the derivative `da/dd`.
#[inline]
pub(crate) fn face_coverage(d: f64, sigma: f64) -> (f64, f64, f64) {
    let x = d / sigma;
    let s = sigmoid(x);
    let ds = s * (1.0 - s) / sigma;
    let start = -REACH * sigma;
    let end = start + FADE * sigma;
    if d >= end {
        (s, sigmoid(-x), ds)
    } else if d <= start {
        (0.0, 1.0, 0.0)
    } else {
        let u = (d - start) / (FADE * sigma);
        let w = u * u * (3.0 - 2.0 * u);
        let dw = 6.0 * u * (1.0 - u) / (FADE * sigma);
        (s * w, 1.0 - s * w, ds * w + s * dw)
    }
}

#[inline]
pub(crate) fn pixel_center(col: usize, row: usize) -> Vector2<f64> {
    Vector2::new(col as f64 + 0.5, row as f64 + 0.5)
}

/// Per-pixel product of face complements `Π (1 - a_f)`, accumulated in face order.
pub(crate) fn complement_product(camera: &Camera, tris: &[(usize, ScreenTriangle)], sigma: f64) -> Vec<f64> {
    let w = camera.width;
    let mut prod = vec![1.0; w * camera.height];
    prod.par_chunks_mut(w).enumerate().for_each(|(row, line)| {
        for (_, t) in tris {
            if row < t.rows.0 || row > t.rows.1 {
                continue;
            }
            for (col, px) in line.iter_mut().enumerate().take(t.cols.1 + 1).skip(t.cols.0) {
                let (d, _) = signed_distance(&pixel_center(col, row), &t.p);
                let (_, comp, _) = face_coverage(d, sigma);
                *px *= comp;
            }
        }
    });
    prod
}

/// Render the soft silhouette of `meshes`: `1 - Π_f (1 - σ(d_f / blur))` per pixel.
pub fn soft_silhouette(camera: &Camera, meshes: &[TriMesh], settings: &SoftRasterSettings) -> Result<SilhouetteImage> {
    camera.validate()?;
    settings.validate()?;
    let projector = camera.projector();
    let mut prod = vec![1.0; camera.width * camera.height];
    for mesh in meshes {
        mesh.validate()?;
        if mesh.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Domain("mesh has non-finite vertices".into()));
        }
        let tris = project_faces(camera, &projector, &mesh.vertices, &mesh.faces, settings.blur_sigma);
        for (p, m) in prod.iter_mut().zip(complement_product(camera, &tris, settings.blur_sigma)) {
            *p *= m;
        }
    }
    Ok(SilhouetteImage {
        width: camera.width,
        height: camera.height,
        values: prod.into_iter().map(|p| (1.0 - p).clamp(0.0, 1.0)).collect(),
    })
}
