//! Point-to-point ICP with SVD (Kabsch) updates.

use nalgebra::{Matrix3, Vector3};

use super::kdtree::KdTree;
use super::OrientedPointSet;
use crate::error::{Error, Result};
use crate::kinematics::Se3Transform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpOptions {
    pub max_iters: usize,
    /// Stop once the mean squared distance improves by less than this.
    pub tol: f64,
    pub initial: Se3Transform,
}

impl Default for IcpOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-12,
            initial: Se3Transform::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source points onto the target.
    pub transform: Se3Transform,
    /// Mean squared nearest-neighbour distance, starting with the initial pose.
    pub residuals: Vec<f64>,
    /// Source points are (nearly) collinear, so the rotation about their line is arbitrary.
    pub degenerate: bool,
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn is_collinear(points: &[Vector3<f64>]) -> bool {
    let c = centroid(points);
    let cov: Matrix3<f64> = points.iter().map(|p| (p - c) * (p - c).transpose()).sum();
    let mut sv = cov.singular_values();
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    sv[0] == 0.0 || sv[1] <= 1e-12 * sv[0]
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
pub(crate) fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Se3Transform {
    let cs = centroid(src);
    let cd = centroid(dst);
    let h: Matrix3<f64> = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (s - cs) * (d - cd).transpose())
        .sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    Se3Transform::new(r, cd - r * cs)
}

fn residual(tree: &KdTree, src: &[Vector3<f64>], t: &Se3Transform, matches: &mut [Vector3<f64>], target: &[Vector3<f64>]) -> f64 {
    let mut sum = 0.0;
    for (p, m) in src.iter().zip(matches.iter_mut()) {
        let (i, d) = tree.nearest(&t.transform_point(p)).expect("non-empty target");
        *m = target[i];
        sum += d;
    }
    sum / src.len() as f64
}

/// Rigidly align `source` to `target`.
pub fn icp_align(source: &OrientedPointSet, target: &OrientedPointSet, options: &IcpOptions) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Argument("ICP needs non-empty point sets".into()));
    }
    let src = &source.points;
    let tree = KdTree::new(&target.points);
    let mut matches = vec![Vector3::zeros(); src.len()];
    let mut transform = options.initial;
    let mut err = residual(&tree, src, &transform, &mut matches, &target.points);
    let mut residuals = vec![err];
    for _ in 0..options.max_iters {
        if err == 0.0 {
            break;
        }
        let candidate = kabsch(src, &matches);
        let mut cand_matches = matches.clone();
        let cand_err = residual(&tree, src, &candidate, &mut cand_matches, &target.points);
        if cand_err > err {
            // rounding can only make a fixed point look worse
            break;
        }
        let improvement = err - cand_err;
        transform = candidate;
        matches = cand_matches;
        err = cand_err;
        residuals.push(err);
        if improvement < options.tol {
            break;
        }
    }
    Ok(IcpResult {
        transform,
        residuals,
        degenerate: is_collinear(src),
    })
}
