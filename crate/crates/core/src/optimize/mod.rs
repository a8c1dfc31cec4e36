//! Silhouette losses and the joint-parameter refinement loop.

mod loss;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::JointDelta;
use crate::mesh::TriMesh;
use crate::render::{Camera, GradientContext, SilhouetteImage, SoftRasterSettings, DEFAULT_BLUR_SIGMA};
use crate::urdf::Joint;

pub use loss::{
    edge_loss, edge_loss_with, reg_loss, region_loss, region_loss_with, EdgeNorm, LossBreakdown, LossOptions,
    RegWeights, RegionNorm,
};
pub(crate) use loss::{pixel_losses, reg_gradient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub plateau_patience: usize,
    pub plateau_tol: f64,
    /// Square image side in pixels.
    pub resolution: usize,
    pub blur_sigma: f64,
    pub reg: RegWeights,
    pub loss: LossOptions,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-2,
            max_iters: 300,
            plateau_patience: 30,
            plateau_tol: 1e-5,
            resolution: 256,
            blur_sigma: DEFAULT_BLUR_SIGMA,
            reg: RegWeights::default(),
            loss: LossOptions::default(),
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be at least 1".into()));
        }
        if self.resolution == 0 {
            return Err(Error::Argument("resolution must be positive".into()));
        }
        self.reg.validate()?;
        SoftRasterSettings {
            blur_sigma: self.blur_sigma,
        }
        .validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Argument(format!("invalid optimizer config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: LossBreakdown,
    pub delta: JointDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeTrace {
    pub records: Vec<TraceRecord>,
    pub best_delta: JointDelta,
    pub best_loss: f64,
    pub stop: StopReason,
}

impl OptimizeTrace {
    /// Running minimum of the recorded total loss.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.loss.total);
                Some(*best)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,total,region,edge,reg,dt_x,dt_y,dt_z,dtheta\n");
        for r in &self.records {
            let t = r.delta.delta_t;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iter, r.loss.total, r.loss.region, r.loss.edge, r.loss.reg, t[0], t[1], t[2], r.delta.delta_theta
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

struct Adam {
    m: [f64; 4],
    v: [f64; 4],
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new() -> Self {
        Self {
            m: [0.0; 4],
            v: [0.0; 4],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64; 4], g: &[f64; 4], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..4 {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Refine `(Δt, Δθ)` of `joint` so the rendered silhouette matches `i_open`,
/// starting from zero. Returns the lowest-loss delta seen.
pub fn optimize_joint(
    static_parts: &[TriMesh],
    moving_part: &TriMesh,
    joint: &Joint,
    camera: &Camera,
    i_open: &SilhouetteImage,
    config: &OptimizeConfig,
) -> Result<(JointDelta, OptimizeTrace)> {
    config.validate()?;
    if camera.width != config.resolution || camera.height != config.resolution {
        return Err(Error::Argument(format!(
            "camera renders {}x{} but the configured resolution is {}",
            camera.width, camera.height, config.resolution
        )));
    }
    if i_open.width != camera.width || i_open.height != camera.height {
        return Err(Error::Argument(format!(
            "target image is {}x{} but the camera renders {}x{}",
            i_open.width, i_open.height, camera.width, camera.height
        )));
    }
    let ctx = GradientContext::new(
        camera,
        static_parts,
        moving_part,
        joint,
        SoftRasterSettings {
            blur_sigma: config.blur_sigma,
        },
    )?;
    let mut x = [0.0; 4];
    let mut adam = Adam::new();
    let mut records = Vec::new();
    let mut best: Option<(f64, JointDelta)> = None;
    let mut plateau_best = f64::INFINITY;
    let mut stale = 0;
    let mut stop = StopReason::MaxIters;
    for iter in 0..config.max_iters {
        let delta = JointDelta::from_array(x);
        let eval = ctx.evaluate(&delta, i_open, &config.reg, &config.loss)?;
        if !eval.loss.total.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Processing(format!(
                "non-finite loss or gradient at iteration {iter} (delta_t {:?}, delta_theta {}, last loss {:?})",
                delta.delta_t,
                delta.delta_theta,
                records.last().map(|r: &TraceRecord| r.loss.total)
            )));
        }
        records.push(TraceRecord {
            iter,
            loss: eval.loss,
            delta,
        });
        if best.is_none_or(|(b, _)| eval.loss.total < b) {
            best = Some((eval.loss.total, delta));
        }
        if eval.loss.total < plateau_best - config.plateau_tol {
            plateau_best = eval.loss.total;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.plateau_patience {
                stop = StopReason::Plateau;
                break;
            }
        }
        if iter + 1 < config.max_iters {
            adam.step(&mut x, &eval.grad, config.learning_rate);
        }
    }
    let (best_loss, best_delta) = best.expect("at least one iteration");
    Ok((
        best_delta,
        OptimizeTrace {
            records,
            best_delta,
            best_loss,
            stop,
        },
    ))
}
