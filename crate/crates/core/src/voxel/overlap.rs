use nalgebra::Vector3;

fn project(tri: &[Vector3<f64>; 3], axis: &Vector3<f64>) -> (f64, f64) {
    let p = [axis.dot(&tri[0]), axis.dot(&tri[1]), axis.dot(&tri[2])];
    (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]))
}

/// Closed separating-axis test between a triangle and an axis-aligned box.
/// Touching counts as overlap.
pub fn triangle_box_overlap(center: &Vector3<f64>, half: &Vector3<f64>, tri: &[Vector3<f64>; 3]) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];
    let slack = 1e-12 * half.max();
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half[a] + slack || hi < -half[a] - slack {
            return false;
        }
    }
    let edges = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(10);
    axes.push(edges[0].cross(&edges[1]));
    for e in &edges {
        for unit in [Vector3::x(), Vector3::y(), Vector3::z()] {
            axes.push(e.cross(&unit));
        }
    }
    for axis in &axes {
        if axis.norm_squared() == 0.0 {
            continue;
        }
        let (lo, hi) = project(&v, axis);
        let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
        let tol = slack * axis.abs().sum();
        if lo > r + tol || hi < -r - tol {
            return false;
        }
    }
    true
}
