use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RADIUS: f64 = 4.0;
pub const DEFAULT_FOV_Y: f64 = 40.0;

/// Pinhole camera. Pixel `(col, row)` has its center at `(col + 0.5, row + 0.5)`,
/// rows grow downwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vector3<f64>,
    pub look_at: Vector3<f64>,
    pub up: Vector3<f64>,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        position: Vector3<f64>,
        look_at: Vector3<f64>,
        up: Vector3<f64>,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            position,
            look_at,
            up,
            fov_y,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.position - self.look_at).norm() == 0.0 {
            return Err(Error::Argument("camera position coincides with look_at".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(Error::Argument(format!("fov must lie in (0, 180) degrees, got {}", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Argument("resolution must be positive".into()));
        }
        let f = (self.look_at - self.position).normalize();
        if f.cross(&self.up).norm() < 1e-12 {
            return Err(Error::Argument("up vector is parallel to the viewing direction".into()));
        }
        Ok(())
    }

    /// Rows are the camera right, up and forward axes in world coordinates.
    pub fn rotation(&self) -> Matrix3<f64> {
        let f = (self.look_at - self.position).normalize();
        let r = f.cross(&self.up).normalize();
        let u = r.cross(&f);
        Matrix3::from_rows(&[r.transpose(), u.transpose(), f.transpose()])
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y.to_radians()).tan()
    }

    pub(crate) fn projector(&self) -> Projector {
        Projector {
            rotation: self.rotation(),
            position: self.position,
            focal: self.focal(),
            cx: 0.5 * self.width as f64,
            cy: 0.5 * self.height as f64,
        }
    }

    /// Pixel coordinates and depth of a world point.
    pub fn project(&self, p: &Vector3<f64>) -> (Vector2<f64>, f64) {
        let proj = self.projector();
        let c = proj.to_camera(p);
        (proj.to_pixel(&c), c.z)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Projector {
    rotation: Matrix3<f64>,
    position: Vector3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
}

impl Projector {
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (p - self.position)
    }

    pub fn to_pixel(&self, c: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.cx + self.focal * c.x / c.z, self.cy - self.focal * c.y / c.z)
    }

    /// Derivative of the pixel position with respect to the world point.
    pub fn jacobian(&self, c: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / c.z;
        let d = Matrix2x3::new(
            self.focal * iz,
            0.0,
            -self.focal * c.x * iz * iz,
            0.0,
            -self.focal * iz,
            self.focal * c.y * iz * iz,
        );
        d * self.rotation
    }
}

/// Camera on a sphere around the origin. Azimuth turns about +y starting at +z,
/// elevation lifts towards +y.
pub fn camera_on_sphere(azimuth: f64, elevation: f64, radius: f64, fov_y: f64, resolution: usize) -> Result<Camera> {
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("radius must be positive, got {radius}")));
    }
    let (az, el) = (azimuth.to_radians(), elevation.to_radians());
    let position = radius * Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
    let up = if elevation.abs() > 89.0 { Vector3::z() } else { Vector3::y() };
    Camera::new(position, Vector3::zeros(), up, fov_y, resolution, resolution)
}
