use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One rectified-flow training sample over stacked part latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    /// Clean latents.
    pub z0: DMatrix<f64>,
    /// Base (noise) latents.
    pub z1: DMatrix<f64>,
    pub t: f64,
    /// Per-part loss weights.
    pub alpha: Vec<f64>,
    /// Part index of each token row.
    pub part_of: Vec<usize>,
    /// Timestep weight.
    pub w_t: f64,
}

impl FlowSample {
    pub fn validate(&self) -> Result<()> {
        if self.z0.shape() != self.z1.shape() {
            return Err(Error::Argument("clean and base latents differ in shape".into()));
        }
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::Domain(format!("t must lie in [0, 1], got {}", self.t)));
        }
        if self.part_of.len() != self.z0.nrows() {
            return Err(Error::Argument("part map does not cover every token".into()));
        }
        if self.part_of.iter().any(|&p| p >= self.alpha.len()) {
            return Err(Error::Argument("token assigned to a part without a weight".into()));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Domain("part weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `X_t = (1 - t) Z0 + t Z1` and the constant target velocity `U* = Z0 - Z1`.
pub fn rf_interpolate(sample: &FlowSample) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    sample.validate()?;
    let t = sample.t;
    let x = sample.z0.zip_map(&sample.z1, |a, b| (1.0 - t) * a + t * b);
    Ok((x, &sample.z0 - &sample.z1))
}

/// `w_t · Σ_k α_k ‖V_k − U*_k‖²` for a single sample.
pub fn rf_loss(v_pred: &DMatrix<f64>, sample: &FlowSample) -> Result<f64> {
    sample.validate()?;
    if v_pred.shape() != sample.z0.shape() {
        return Err(Error::Argument(format!(
            "prediction has shape {:?}, latents {:?}",
            v_pred.shape(),
            sample.z0.shape()
        )));
    }
    let mut per_part = vec![0.0; sample.alpha.len()];
    for (r, &k) in sample.part_of.iter().enumerate() {
        for c in 0..v_pred.ncols() {
            let d = v_pred[(r, c)] - (sample.z0[(r, c)] - sample.z1[(r, c)]);
            per_part[k] += d * d;
        }
    }
    Ok(sample.w_t * per_part.iter().zip(&sample.alpha).map(|(e, a)| a * e).sum::<f64>())
}

/// Classifier-free guidance, written as `(1 - s) V_uncond + s V_cond` so the
/// endpoints reproduce their inputs exactly.
pub fn cfg_combine(v_uncond: &DMatrix<f64>, v_cond: &DMatrix<f64>, s_cfg: f64) -> Result<DMatrix<f64>> {
    if v_uncond.shape() != v_cond.shape() {
        return Err(Error::Argument("guidance inputs differ in shape".into()));
    }
    Ok(v_uncond.zip_map(v_cond, |u, c| (1.0 - s_cfg) * u + s_cfg * c))
}

fn logistic(x: f64) -> f64 {
    let t = 1.0 / (1.0 + (-x).exp());
    t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Logit-normal timestep `logistic(mu + sigma·g)` with `g ~ N(0, 1)`.
pub fn sample_timestep(mu: f64, sigma: f64, seed: u64) -> Result<f64> {
    Ok(sample_timesteps(mu, sigma, seed, 1)?[0])
}

pub fn sample_timesteps(mu: f64, sigma: f64, seed: u64, count: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::Domain(format!("need finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            logistic(mu + sigma * g)
        })
        .collect())
}
