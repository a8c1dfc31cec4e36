use nalgebra::{Matrix3x4, Vector2, Vector3};
use rayon::prelude::*;

use super::camera::{Camera, Projector};
use super::image::SilhouetteImage;
use super::raster::{complement_product, face_coverage, pixel_center, project_faces, signed_distance, SoftRasterSettings};
use crate::error::{Error, Result};
use crate::kinematics::{ArticulationJacobian, JointDelta};
use crate::mesh::TriMesh;
use crate::optimize::{pixel_losses, reg_gradient, reg_loss, LossBreakdown, LossOptions, RegWeights};
use crate::urdf::Joint;

/// Loss, gradient and rendered image at one joint delta.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    /// `∂L_total / ∂(Δt_x, Δt_y, Δt_z, Δθ)`.
    pub grad: [f64; 4],
    pub image: SilhouetteImage,
}

/// Renders a scene of fixed parts plus one articulated part. The fixed parts are
/// rasterized once and reused across evaluations.
pub struct GradientContext<'a> {
    camera: &'a Camera,
    projector: Projector,
    settings: SoftRasterSettings,
    static_prod: Vec<f64>,
    moving: &'a TriMesh,
    joint: &'a Joint,
}

impl<'a> GradientContext<'a> {
    pub fn new(
        camera: &'a Camera,
        static_parts: &[TriMesh],
        moving: &'a TriMesh,
        joint: &'a Joint,
        settings: SoftRasterSettings,
    ) -> Result<Self> {
        camera.validate()?;
        settings.validate()?;
        if !joint.kind.is_movable() {
            return Err(Error::Argument(format!("joint '{}' is fixed", joint.name)));
        }
        moving.validate()?;
        let projector = camera.projector();
        let mut static_prod = vec![1.0; camera.width * camera.height];
        for mesh in static_parts {
            mesh.validate()?;
            let tris = project_faces(camera, &projector, &mesh.vertices, &mesh.faces, settings.blur_sigma);
            for (p, m) in static_prod.iter_mut().zip(complement_product(camera, &tris, settings.blur_sigma)) {
                *p *= m;
            }
        }
        Ok(Self {
            camera,
            projector,
            settings,
            static_prod,
            moving,
            joint,
        })
    }

    pub fn camera(&self) -> &Camera {
        self.camera
    }

    /// Render the scene with the moving part articulated by `delta`.
    pub fn render(&self, delta: &JointDelta) -> Result<SilhouetteImage> {
        let jac = ArticulationJacobian::new(self.joint, delta)?;
        let moved: Vec<Vector3<f64>> = self.moving.vertices.iter().map(|v| jac.apply(v)).collect();
        let tris = project_faces(self.camera, &self.projector, &moved, &self.moving.faces, self.settings.blur_sigma);
        let prod = complement_product(self.camera, &tris, self.settings.blur_sigma);
        Ok(self.image_from(&prod))
    }

    fn image_from(&self, moving_prod: &[f64]) -> SilhouetteImage {
        SilhouetteImage {
            width: self.camera.width,
            height: self.camera.height,
            values: self
                .static_prod
                .iter()
                .zip(moving_prod)
                .map(|(a, b)| (1.0 - a * b).clamp(0.0, 1.0))
                .collect(),
        }
    }

    /// Total loss against `target` and its analytic gradient.
    pub fn evaluate(
        &self,
        delta: &JointDelta,
        target: &SilhouetteImage,
        reg: &RegWeights,
        options: &LossOptions,
    ) -> Result<Evaluation> {
        if target.width != self.camera.width || target.height != self.camera.height {
            return Err(Error::Argument(format!(
                "target is {}x{} but the camera renders {}x{}",
                target.width, target.height, self.camera.width, self.camera.height
            )));
        }
        if !delta.is_finite() {
            return Err(Error::Argument("joint delta is not finite".into()));
        }
        let sigma = self.settings.blur_sigma;
        let jac = ArticulationJacobian::new(self.joint, delta)?;
        let moved: Vec<(Vector3<f64>, Matrix3x4<f64>)> =
            self.moving.vertices.iter().map(|v| jac.apply_with_jacobian(v)).collect();
        let positions: Vec<Vector3<f64>> = moved.iter().map(|(p, _)| *p).collect();
        let tris = project_faces(self.camera, &self.projector, &positions, &self.moving.faces, sigma);
        let moving_prod = complement_product(self.camera, &tris, sigma);
        let image = self.image_from(&moving_prod);
        let (region, edge, dl_di) = pixel_losses(&image, target, options)?;
        let reg_value = reg_loss(delta, reg);
        let loss = LossBreakdown {
            total: region + edge + reg_value,
            region,
            edge,
            reg: reg_value,
        };

        let w = self.camera.width;
        let total_prod: Vec<f64> = self.static_prod.iter().zip(&moving_prod).map(|(a, b)| a * b).collect();
        let per_face: Vec<[Vector2<f64>; 3]> = tris
            .par_iter()
            .map(|(_, t)| {
                let mut acc = [Vector2::zeros(); 3];
                for row in t.rows.0..=t.rows.1 {
                    for col in t.cols.0..=t.cols.1 {
                        let pix = row * w + col;
                        if dl_di[pix] == 0.0 {
                            continue;
                        }
                        let (d, dd) = signed_distance(&pixel_center(col, row), &t.p);
                        let (_, comp, da) = face_coverage(d, sigma);
                        if da == 0.0 || comp == 0.0 {
                            continue;
                        }
                        // dI/da_f is the product of every other complement
                        let s = dl_di[pix] * (total_prod[pix] / comp) * da;
                        for k in 0..3 {
                            acc[k] += dd[k] * s;
                        }
                    }
                }
                acc
            })
            .collect();

        let mut vertex_grad = vec![Vector2::zeros(); positions.len()];
        for ((fi, _), g) in tris.iter().zip(&per_face) {
            for (k, &v) in self.moving.faces[*fi].iter().enumerate() {
                vertex_grad[v] += g[k];
            }
        }
        let mut grad = reg_gradient(delta, reg);
        for (g2, (p, jv)) in vertex_grad.iter().zip(&moved) {
            if g2.x == 0.0 && g2.y == 0.0 {
                continue;
            }
            let proj = self.projector.jacobian(&self.projector.to_camera(p));
            let row = g2.transpose() * proj * jv;
            for (i, v) in row.iter().enumerate() {
                grad[i] += v;
            }
        }
        Ok(Evaluation { loss, grad, image })
    }

    /// Face indices of the moving part that survive culling at `delta`.
    pub fn visible_moving_faces(&self, delta: &JointDelta) -> Result<Vec<usize>> {
        let jac = ArticulationJacobian::new(self.joint, delta)?;
        let moved: Vec<Vector3<f64>> = self.moving.vertices.iter().map(|v| jac.apply(v)).collect();
        Ok(project_faces(self.camera, &self.projector, &moved, &self.moving.faces, self.settings.blur_sigma)
            .into_iter()
            .map(|(f, _)| f)
            .collect())
    }
}

/// Loss of the articulated scene against `target` with its gradient in `(Δt, Δθ)`.
#[allow(clippy::too_many_arguments)]
pub fn silhouette_gradient(
    camera: &Camera,
    static_parts: &[TriMesh],
    moving_part: &TriMesh,
    joint: &Joint,
    delta: &JointDelta,
    target: &SilhouetteImage,
    settings: &SoftRasterSettings,
    reg: &RegWeights,
) -> Result<(LossBreakdown, [f64; 4])> {
    let ctx = GradientContext::new(camera, static_parts, moving_part, joint, *settings)?;
    let eval = ctx.evaluate(delta, target, reg, &LossOptions::default())?;
    Ok((eval.loss, eval.grad))
}
