use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::sync::OnceLock;

use nalgebra::Vector3;

use super::OccupancyGrid;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// A closed boundary loop inside one cube: edge ids in traversal order, each tagged
/// with the cube face its outgoing segment lies on.
type Loop = Vec<(u8, u8)>;

struct Tables {
    /// Per edge: axis and lower corner offset.
    edges: [(usize, [i64; 3]); 12],
    cases: Vec<Vec<Loop>>,
}

fn corner_offset(b: usize) -> [usize; 3] {
    [b & 1, (b >> 1) & 1, (b >> 2) & 1]
}

fn build_tables() -> Tables {
    let mut edge_list: Vec<(usize, usize, usize)> = Vec::new();
    for axis in 0..3 {
        for b in 0..8 {
            if b & (1 << axis) == 0 {
                edge_list.push((b, b | (1 << axis), axis));
            }
        }
    }
    let edge_between = |a: usize, b: usize| -> u8 {
        let (lo, hi) = (a.min(b), a.max(b));
        edge_list.iter().position(|&(x, y, _)| x == lo && y == hi).expect("adjacent corners") as u8
    };

    // corner cycles, counter-clockwise seen from outside the cube
    let mut faces: Vec<[usize; 4]> = Vec::new();
    for a in 0..3 {
        let (u, v) = ((a + 1) % 3, (a + 2) % 3);
        for s in 0..2 {
            let mut cyc = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(cu, cv)| (s << a) | (cu << u) | (cv << v));
            if s == 0 {
                cyc.reverse();
            }
            faces.push(cyc);
        }
    }

    let mut cases = Vec::with_capacity(256);
    for mask in 0usize..256 {
        let occ = |b: usize| mask >> b & 1 == 1;
        let mut next: [Option<(u8, u8)>; 12] = [None; 12];
        for (fi, q) in faces.iter().enumerate() {
            let mut crossings: Vec<(u8, bool)> = Vec::new();
            for k in 0..4 {
                let (a, b) = (q[k], q[(k + 1) % 4]);
                if occ(a) != occ(b) {
                    crossings.push((edge_between(a, b), occ(a)));
                }
            }
            let n = crossings.len();
            for (p, &(edge, is_start)) in crossings.iter().enumerate() {
                if !is_start {
                    continue;
                }
                let end = if n == 2 { crossings[1 - p].0 } else { crossings[(p + 1) % n].0 };
                next[edge as usize] = Some((end, fi as u8));
            }
        }
        let mut visited = [false; 12];
        let mut loops = Vec::new();
        for start in 0..12 {
            if visited[start] || next[start].is_none() {
                continue;
            }
            let mut lp = Vec::new();
            let mut cur = start;
            while !visited[cur] {
                visited[cur] = true;
                let (to, face) = next[cur].expect("every crossing has a successor");
                lp.push((cur as u8, face));
                cur = to as usize;
            }
            loops.push(lp);
        }
        cases.push(loops);
    }

    let mut edges = [(0usize, [0i64; 3]); 12];
    for (e, &(lo, _, axis)) in edge_list.iter().enumerate() {
        let o = corner_offset(lo);
        edges[e] = (axis, [o[0] as i64, o[1] as i64, o[2] as i64]);
    }
    Tables { edges, cases }
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(5) ^ b as u64).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
        }
    }
    fn write_u64(&mut self, n: u64) {
        self.0 = (self.0.rotate_left(5) ^ n).wrapping_mul(0x51_7c_c1_b7_27_22_0a_95);
    }
}

/// Extract the boundary between occupied and empty cells as a closed, outward
/// oriented triangle mesh. Cells beyond the grid are treated as empty and vertices
/// sit halfway between neighbouring cell centers.
pub fn marching_cubes(grid: &OccupancyGrid) -> Result<TriMesh> {
    let occupied = grid.occupied_count();
    if occupied == 0 || occupied == grid.cells.len() {
        return Err(Error::Processing(
            "occupancy grid has no boundary between occupied and empty cells".into(),
        ));
    }
    let t = tables();
    let [nx, ny, nz] = grid.shape.map(|n| n as i64);
    let value = |i: i64, j: i64, k: i64| -> bool {
        i >= 0 && j >= 0 && k >= 0 && i < nx && j < ny && k < nz && grid.get(i as usize, j as usize, k as usize)
    };
    let p = grid.pitch;
    let center = |i: f64, j: f64, k: f64| grid.origin + Vector3::new(i + 0.5, j + 0.5, k + 0.5) * p;

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut ids: HashMap<u64, usize, BuildHasherDefault<KeyHasher>> = HashMap::default();

    for ck in -1..nz {
        for cj in -1..ny {
            for ci in -1..nx {
                let mut mask = 0usize;
                for b in 0..8 {
                    let o = corner_offset(b);
                    if value(ci + o[0] as i64, cj + o[1] as i64, ck + o[2] as i64) {
                        mask |= 1 << b;
                    }
                }
                if mask == 0 || mask == 255 {
                    continue;
                }
                for lp in &t.cases[mask] {
                    let mut pts: Vec<usize> = Vec::with_capacity(lp.len());
                    for &(e, _) in lp {
                        let (axis, o) = t.edges[e as usize];
                        let g = [ci + o[0], cj + o[1], ck + o[2]];
                        let key = axis as u64
                            | ((g[0] + 1) as u64) << 2
                            | ((g[1] + 1) as u64) << 23
                            | ((g[2] + 1) as u64) << 44;
                        let id = *ids.entry(key).or_insert_with(|| {
                            let mut c = [g[0] as f64, g[1] as f64, g[2] as f64];
                            c[axis] += 0.5;
                            vertices.push(center(c[0], c[1], c[2]));
                            vertices.len() - 1
                        });
                        pts.push(id);
                    }
                    let mut seen = [false; 6];
                    let repeats = lp.iter().any(|&(_, f)| std::mem::replace(&mut seen[f as usize], true));
                    // loops run with the solid on their left, so emit reversed
                    if pts.len() == 3 {
                        faces.push([pts[0], pts[2], pts[1]]);
                    } else if !repeats {
                        for i in 1..pts.len() - 1 {
                            faces.push([pts[0], pts[i + 1], pts[i]]);
                        }
                    } else {
                        let c = pts.iter().map(|&i| vertices[i]).sum::<Vector3<f64>>() / pts.len() as f64;
                        vertices.push(c);
                        let cid = vertices.len() - 1;
                        for i in 0..pts.len() {
                            faces.push([cid, pts[(i + 1) % pts.len()], pts[i]]);
                        }
                    }
                }
            }
        }
    }
    Ok(TriMesh::new(vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::is_watertight;

    #[test]
    fn every_cube_case_is_closed_and_oriented() {
        for mask in 1usize..255 {
            let mut g = OccupancyGrid::empty([2, 2, 2], Vector3::zeros(), 1.0);
            for b in 0..8 {
                let o = corner_offset(b);
                g.set(o[0], o[1], o[2], mask >> b & 1 == 1);
            }
            let m = marching_cubes(&g).unwrap();
            assert!(is_watertight(&m), "case {mask}");
            assert!(m.signed_volume() > 0.0, "case {mask}");
            for f in 0..m.faces.len() {
                assert!(m.face_area(f) > 1e-9, "case {mask} face {f}");
            }
        }
    }

    #[test]
    fn loops_use_each_crossing_once() {
        let t = tables();
        for (mask, loops) in t.cases.iter().enumerate() {
            let total: usize = loops.iter().map(|l| l.len()).sum();
            let mut expected = 0;
            for &(axis, o) in t.edges.iter() {
                let a = o[0] as usize | (o[1] as usize) << 1 | (o[2] as usize) << 2;
                let b = a | 1 << axis;
                if (mask >> a & 1) != (mask >> b & 1) {
                    expected += 1;
                }
            }
            assert_eq!(total, expected);
        }
    }
}
