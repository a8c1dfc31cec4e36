//! Shape metrics (Chamfer distance, F-score) and articulation metrics (axis,
//! pivot and joint-type errors).

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::normalization_from_bbox;
use crate::mesh::kdtree::KdTree;
use crate::mesh::{sample_surface, TriMesh};

pub const DEFAULT_SAMPLES: usize = 10_000;

/// A joint axis as an infinite line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisLine {
    pub direction: Vector3<f64>,
    pub point: Vector3<f64>,
}

impl AxisLine {
    /// Normalizes `direction`.
    pub fn new(direction: Vector3<f64>, point: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Domain("axis direction must be a nonzero finite vector".into()));
        }
        Ok(Self {
            direction: direction / n,
            point,
        })
    }
}

fn check_nonempty(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("point sets must be nonempty".into()));
    }
    Ok(())
}

/// Distance from each point of `from` to its nearest neighbour in `to`.
fn nn_distances(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    let tree = KdTree::new(to);
    from.par_iter()
        .map(|p| tree.nearest(p).map(|(_, d2)| d2.sqrt()).expect("nonempty tree"))
        .collect()
}

fn nn_distances_brute(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    from.iter()
        .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn chamfer_from(ab: &[f64], ba: &[f64]) -> f64 {
    0.5 * (mean(ab) + mean(ba))
}

fn fscore_from(ab: &[f64], ba: &[f64], tau: f64) -> f64 {
    let precision = ab.iter().filter(|&&d| d <= tau).count() as f64 / ab.len() as f64;
    let recall = ba.iter().filter(|&&d| d <= tau).count() as f64 / ba.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Symmetric mean of unsquared nearest-neighbour distances, halved.
pub fn chamfer(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    check_nonempty(a, b)?;
    Ok(chamfer_from(&nn_distances(a, b), &nn_distances(b, a)))
}

/// Quadratic-time reference for [`chamfer`].
pub fn chamfer_brute_force(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64> {
    check_nonempty(a, b)?;
    Ok(chamfer_from(&nn_distances_brute(a, b), &nn_distances_brute(b, a)))
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("threshold must be positive, got {tau}")));
    }
    Ok(())
}

/// Harmonic mean of the fraction of `a` within `tau` of `b` and vice versa.
pub fn fscore(a: &[Vector3<f64>], b: &[Vector3<f64>], tau: f64) -> Result<f64> {
    check_nonempty(a, b)?;
    check_tau(tau)?;
    Ok(fscore_from(&nn_distances(a, b), &nn_distances(b, a), tau))
}

/// Quadratic-time reference for [`fscore`].
pub fn fscore_brute_force(a: &[Vector3<f64>], b: &[Vector3<f64>], tau: f64) -> Result<f64> {
    check_nonempty(a, b)?;
    check_tau(tau)?;
    Ok(fscore_from(&nn_distances_brute(a, b), &nn_distances_brute(b, a), tau))
}

/// Angle between axis directions, optionally ignoring their sign.
pub fn axis_err(pred: &AxisLine, gt: &AxisLine, sign_invariant: bool) -> f64 {
    let dot = pred.direction.dot(&gt.direction);
    if sign_invariant {
        dot.abs().clamp(0.0, 1.0).acos()
    } else {
        dot.clamp(-1.0, 1.0).acos()
    }
}

/// Minimum distance between the two infinite axis lines.
pub fn pivot_err(pred: &AxisLine, gt: &AxisLine) -> f64 {
    let w = gt.point - pred.point;
    let n = pred.direction.cross(&gt.direction);
    let nn = n.norm();
    if nn < 1e-12 {
        w.cross(&pred.direction).norm()
    } else {
        w.dot(&n).abs() / nn
    }
}

/// Fraction of positions where the predicted type differs.
pub fn type_err<T: PartialEq>(pred: &[T], gt: &[T]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Argument(format!(
            "{} predicted types for {} ground-truth types",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(gt).filter(|(p, g)| p != g).count() as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub chamfer: f64,
    pub fscore_0_1: f64,
    pub fscore_0_5: f64,
}

/// Sample both surfaces after mapping them with the ground truth's normalization
/// (bbox center to the origin, max extent 2), then score. Both surfaces are
/// sampled with the same seed, so identical meshes score exactly 0 and 1.
pub fn shape_metrics(pred: &TriMesh, gt: &TriMesh, samples: usize, seed: u64) -> Result<ShapeMetrics> {
    let (lo, hi) = gt
        .bounds()
        .ok_or_else(|| Error::Argument("ground-truth mesh is empty".into()))?;
    let norm = normalization_from_bbox(lo, hi)?;
    let a = sample_surface(&pred.map_vertices(|v| norm.apply(&v)), samples, seed)?.points;
    let b = sample_surface(&gt.map_vertices(|v| norm.apply(&v)), samples, seed)?.points;
    let (ab, ba) = (nn_distances(&a, &b), nn_distances(&b, &a));
    Ok(ShapeMetrics {
        chamfer: chamfer_from(&ab, &ba),
        fscore_0_1: fscore_from(&ab, &ba, 0.1),
        fscore_0_5: fscore_from(&ab, &ba, 0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn chamfer_cases() {
        let a = vec![v(0.0, 0.0, 0.0), v(1.0, 2.0, 3.0)];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&[v(0.0, 0.0, 0.0)], &[v(1.0, 0.0, 0.0)]).unwrap(), 1.0);
        assert!(chamfer(&[], &a).is_err());
    }

    #[test]
    fn fscore_cases() {
        let a = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)];
        assert_eq!(fscore(&a, &a, 0.01).unwrap(), 1.0);
        assert_eq!(fscore(&a, &[v(10.0, 0.0, 0.0)], 0.5).unwrap(), 0.0);
        // half of A near B, all of B near A
        let b = vec![v(0.05, 0.0, 0.0)];
        assert!((fscore(&a, &b, 0.1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(fscore(&a, &b, 0.0).is_err());
    }

    #[test]
    fn axis_and_pivot_cases() {
        let y = AxisLine::new(v(0.0, 1.0, 0.0), v(0.0, 0.0, 0.0)).unwrap();
        let x = AxisLine::new(v(1.0, 0.0, 0.0), v(0.0, 0.0, 0.0)).unwrap();
        let neg = AxisLine::new(v(0.0, -1.0, 0.0), v(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(axis_err(&y, &y, false), 0.0);
        assert!((axis_err(&y, &x, false) - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(axis_err(&y, &neg, true), 0.0);
        assert!((axis_err(&y, &neg, false) - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(pivot_err(&y, &y), 0.0);
        let shifted = AxisLine::new(v(0.0, 1.0, 0.0), v(0.3, 5.0, 0.4)).unwrap();
        assert!((pivot_err(&y, &shifted) - 0.5).abs() < 1e-15);
        let skew = AxisLine::new(v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)).unwrap();
        assert!((pivot_err(&x, &skew) - 1.0).abs() < 1e-15);
        assert!(AxisLine::new(Vector3::zeros(), Vector3::zeros()).is_err());
    }

    #[test]
    fn type_cases() {
        assert_eq!(type_err(&["a", "b"], &["a", "b"]).unwrap(), 0.0);
        assert_eq!(type_err(&["a", "b"], &["b", "a"]).unwrap(), 1.0);
        assert_eq!(type_err(&[1, 2, 3, 4], &[1, 2, 3, 5]).unwrap(), 0.25);
        assert!(type_err(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn identical_meshes_score_perfectly() {
        let m = TriMesh::cuboid(v(0.0, 0.0, 0.0), v(2.0, 1.0, 1.0));
        let s = shape_metrics(&m, &m, 2000, 3).unwrap();
        assert!(s.chamfer < 0.05);
        assert_eq!(s.fscore_0_5, 1.0);
    }
}
