use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::JointDelta;
use crate::render::SilhouetteImage;

const DENOM_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegWeights {
    pub lambda_t: f64,
    pub lambda_theta: f64,
}

impl Default for RegWeights {
    fn default() -> Self {
        Self {
            lambda_t: 1e-2,
            lambda_theta: 1e-3,
        }
    }
}

impl RegWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_t >= 0.0) || !(self.lambda_theta >= 0.0) {
            return Err(Error::Argument("regularization weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Image norm in the denominator of the region term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionNorm {
    /// Sum of pixel values (soft Dice).
    L1Mass,
    /// Sum of squared pixel values. Unlike the L1 form this is minimized exactly
    /// at `I_sil = I_open` for non-binary images.
    SquaredL2,
}

/// Reduction over per-pixel gradient-magnitude differences in the edge term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeNorm {
    #[default]
    MeanAbs,
    RootMeanSquare,
}

/// Norms used by the optimizer objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossOptions {
    pub region_norm: RegionNorm,
    pub edge_norm: EdgeNorm,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            region_norm: RegionNorm::SquaredL2,
            edge_norm: EdgeNorm::MeanAbs,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub region: f64,
    pub edge: f64,
    pub reg: f64,
}

fn check_same(a: &SilhouetteImage, b: &SilhouetteImage) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::Argument(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn region_with_grad(i: &SilhouetteImage, t: &SilhouetteImage, norm: RegionNorm, grad: Option<&mut [f64]>) -> f64 {
    let inner: f64 = i.values.iter().zip(&t.values).map(|(a, b)| a * b).sum();
    let den = match norm {
        RegionNorm::L1Mass => i.sum() + t.sum(),
        RegionNorm::SquaredL2 => i.values.iter().chain(&t.values).map(|v| v * v).sum(),
    } + DENOM_GUARD;
    let num = 2.0 * inner + DENOM_GUARD;
    if let Some(g) = grad {
        for ((g, &a), &b) in g.iter_mut().zip(&i.values).zip(&t.values) {
            let dden = match norm {
                RegionNorm::L1Mass => 1.0,
                RegionNorm::SquaredL2 => 2.0 * a,
            };
            *g += -(2.0 * b * den - num * dden) / (den * den);
        }
    }
    1.0 - num / den
}

/// Region overlap term `1 - (2<I, T> + ε) / (|I| + |T| + ε)`; two empty images score 0.
pub fn region_loss(i_sil: &SilhouetteImage, i_open: &SilhouetteImage) -> Result<f64> {
    region_loss_with(i_sil, i_open, RegionNorm::L1Mass)
}

pub fn region_loss_with(i_sil: &SilhouetteImage, i_open: &SilhouetteImage, norm: RegionNorm) -> Result<f64> {
    check_same(i_sil, i_open)?;
    Ok(region_with_grad(i_sil, i_open, norm, None))
}

/// Central-difference gradient components with replicated borders.
fn gradients(img: &SilhouetteImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
            gx[r * w + c] = 0.5 * (img.get(cr, r) - img.get(cl, r));
            gy[r * w + c] = 0.5 * (img.get(c, rd) - img.get(c, ru));
        }
    }
    (gx, gy)
}

fn edge_with_grad(i: &SilhouetteImage, t: &SilhouetteImage, norm: EdgeNorm, grad: Option<&mut [f64]>) -> f64 {
    let (ix, iy) = gradients(i);
    let (tx, ty) = gradients(t);
    let n = (i.width * i.height) as f64;
    let mag: Vec<f64> = ix.iter().zip(&iy).map(|(x, y)| x.hypot(*y)).collect();
    let diff: Vec<f64> = mag
        .iter()
        .zip(tx.iter().zip(&ty))
        .map(|(m, (x, y))| m - x.hypot(*y))
        .collect();
    let loss = match norm {
        EdgeNorm::MeanAbs => diff.iter().map(|d| d.abs()).sum::<f64>() / n,
        EdgeNorm::RootMeanSquare => (diff.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
    };
    if let Some(g) = grad {
        let (w, h) = (i.width, i.height);
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                let dl_dm = match norm {
                    EdgeNorm::MeanAbs => {
                        if diff[p] > 0.0 {
                            1.0 / n
                        } else if diff[p] < 0.0 {
                            -1.0 / n
                        } else {
                            0.0
                        }
                    }
                    EdgeNorm::RootMeanSquare if loss > 0.0 => diff[p] / (n * loss),
                    EdgeNorm::RootMeanSquare => 0.0,
                };
                if dl_dm == 0.0 || mag[p] == 0.0 {
                    continue;
                }
                let dgx = 0.5 * dl_dm * ix[p] / mag[p];
                let dgy = 0.5 * dl_dm * iy[p] / mag[p];
                g[r * w + (c + 1).min(w - 1)] += dgx;
                g[r * w + c.saturating_sub(1)] -= dgx;
                g[(r + 1).min(h - 1) * w + c] += dgy;
                g[r.saturating_sub(1) * w + c] -= dgy;
            }
        }
    }
    loss
}

/// Edge term: mean absolute difference of gradient magnitudes.
pub fn edge_loss(i_sil: &SilhouetteImage, i_open: &SilhouetteImage) -> Result<f64> {
    edge_loss_with(i_sil, i_open, EdgeNorm::MeanAbs)
}

pub fn edge_loss_with(i_sil: &SilhouetteImage, i_open: &SilhouetteImage, norm: EdgeNorm) -> Result<f64> {
    check_same(i_sil, i_open)?;
    if i_sil.width < 3 || i_sil.height < 3 {
        return Err(Error::Argument("edge loss needs images of at least 3x3 pixels".into()));
    }
    Ok(edge_with_grad(i_sil, i_open, norm, None))
}

/// `λ_t |Δt|² + λ_θ Δθ²`.
pub fn reg_loss(delta: &JointDelta, weights: &RegWeights) -> f64 {
    weights.lambda_t * delta.dt().norm_squared() + weights.lambda_theta * delta.delta_theta * delta.delta_theta
}

pub(crate) fn reg_gradient(delta: &JointDelta, weights: &RegWeights) -> [f64; 4] {
    let t = delta.delta_t;
    [
        2.0 * weights.lambda_t * t[0],
        2.0 * weights.lambda_t * t[1],
        2.0 * weights.lambda_t * t[2],
        2.0 * weights.lambda_theta * delta.delta_theta,
    ]
}

/// Region and edge terms with their derivative with respect to each pixel of `i_sil`.
pub(crate) fn pixel_losses(
    i_sil: &SilhouetteImage,
    i_open: &SilhouetteImage,
    options: &LossOptions,
) -> Result<(f64, f64, Vec<f64>)> {
    check_same(i_sil, i_open)?;
    if i_sil.width < 3 || i_sil.height < 3 {
        return Err(Error::Argument("edge loss needs images of at least 3x3 pixels".into()));
    }
    let mut grad = vec![0.0; i_sil.values.len()];
    let region = region_with_grad(i_sil, i_open, options.region_norm, Some(&mut grad));
    let edge = edge_with_grad(i_sil, i_open, options.edge_norm, Some(&mut grad));
    Ok((region, edge, grad))
}
