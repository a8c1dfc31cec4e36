//! Pinhole cameras, soft silhouette rasterization and silhouette gradients with
//! respect to joint parameters.

mod camera;
mod gradient;
mod image;
mod raster;

pub use camera::{camera_on_sphere, Camera, DEFAULT_FOV_Y, DEFAULT_RADIUS};
pub use gradient::{silhouette_gradient, Evaluation, GradientContext};
pub use image::SilhouetteImage;
pub use raster::{soft_silhouette, SoftRasterSettings, DEFAULT_BLUR_SIGMA};
