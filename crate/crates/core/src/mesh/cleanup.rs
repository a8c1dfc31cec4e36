//! Vertex welding, degenerate/duplicate face removal, component filtering and
//! orientation repair.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::Vector3;

use super::TriMesh;

/// Maximum number of duplicate/degenerate removal sweeps.
const MAX_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanupOptions {
    pub weld_radius: f64,
    pub keep_largest: bool,
}

impl Default for CleanupOptions {
    fn default() -> Self {
        Self {
            weld_radius: 1e-6,
            keep_largest: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanupReport {
    pub welded_vertices: usize,
    pub removed_faces: usize,
    pub components: usize,
    pub dropped_components: usize,
    pub non_orientable: bool,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Union keeping the smaller index as root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Vertex → representative (lowest index within its weld cluster).
fn weld_map(vertices: &[Vector3<f64>], radius: f64) -> Vec<usize> {
    let n = vertices.len();
    let mut uf = UnionFind::new(n);
    if radius > 0.0 {
        let cell = |v: &Vector3<f64>| -> [i64; 3] {
            [
                (v.x / radius).floor() as i64,
                (v.y / radius).floor() as i64,
                (v.z / radius).floor() as i64,
            ]
        };
        let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let r2 = radius * radius;
        for (i, v) in vertices.iter().enumerate() {
            let c = cell(v);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &j in list {
                                if (vertices[j] - v).norm_squared() <= r2 {
                                    uf.union(i, j);
                                }
                            }
                        }
                    }
                }
            }
            grid.entry(c).or_default().push(i);
        }
    } else {
        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            match seen.get(&key) {
                Some(&j) => uf.union(i, j),
                None => {
                    seen.insert(key, i);
                }
            }
        }
    }
    (0..n).map(|i| uf.find(i)).collect()
}

fn is_degenerate(vertices: &[Vector3<f64>], f: &[usize; 3]) -> bool {
    if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
        return true;
    }
    let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
    let cross = (b - a).cross(&(c - a)).norm();
    let scale = (b - a).norm_squared().max((c - a).norm_squared()).max((c - b).norm_squared());
    cross <= f64::EPSILON * scale
}

fn remove_bad_faces(vertices: &[Vector3<f64>], faces: &mut Vec<[usize; 3]>) -> usize {
    let before = faces.len();
    for _ in 0..MAX_PASSES {
        let n = faces.len();
        let mut seen = HashSet::new();
        faces.retain(|f| {
            if is_degenerate(vertices, f) {
                return false;
            }
            let mut key = *f;
            key.sort_unstable();
            seen.insert(key)
        });
        if faces.len() == n {
            break;
        }
    }
    before - faces.len()
}

/// Drop unreferenced vertices, preserving the order of the rest.
fn compact(mesh: &mut TriMesh) {
    let mut used = vec![false; mesh.vertices.len()];
    for f in &mesh.faces {
        for &i in f {
            used[i] = true;
        }
    }
    let mut remap = vec![usize::MAX; mesh.vertices.len()];
    let mut next = 0;
    for (i, u) in used.iter().enumerate() {
        if *u {
            remap[i] = next;
            next += 1;
        }
    }
    let keep = |i: usize| used[i];
    mesh.vertices = mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, v)| *v)
        .collect();
    if let Some(normals) = &mut mesh.normals {
        *normals = normals
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, v)| *v)
            .collect();
    }
    for f in &mut mesh.faces {
        *f = f.map(|i| remap[i]);
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn edge_faces(faces: &[[usize; 3]]) -> HashMap<(usize, usize), Vec<usize>> {
    let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            map.entry(edge_key(f[k], f[(k + 1) % 3])).or_default().push(fi);
        }
    }
    map
}

/// True iff the mesh has faces and every undirected edge borders exactly two faces.
pub fn is_watertight(mesh: &TriMesh) -> bool {
    if mesh.faces.is_empty() {
        return false;
    }
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            *counts.entry(edge_key(f[k], f[(k + 1) % 3])).or_default() += 1;
        }
    }
    counts.values().all(|&c| c == 2)
}

/// Face components connected through shared vertices, in order of first face.
fn components(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(mesh.vertices.len());
    for f in &mesh.faces {
        uf.union(f[0], f[1]);
        uf.union(f[1], f[2]);
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        let root = uf.find(f[0]);
        let ci = *index.entry(root).or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        comps[ci].push(fi);
    }
    comps
}

fn subset_watertight(mesh: &TriMesh, faces: &[usize]) -> bool {
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for &fi in faces {
        let f = mesh.faces[fi];
        for k in 0..3 {
            *counts.entry(edge_key(f[k], f[(k + 1) % 3])).or_default() += 1;
        }
    }
    !faces.is_empty() && counts.values().all(|&c| c == 2)
}

fn subset_volume(mesh: &TriMesh, faces: &[usize]) -> f64 {
    let v = &mesh.vertices;
    faces
        .iter()
        .map(|&fi| {
            let [a, b, c] = mesh.faces[fi];
            v[a].dot(&v[b].cross(&v[c]))
        })
        .sum::<f64>()
        / 6.0
}

/// Make winding consistent across manifold edges; closed components end up with
/// positive volume. Returns false if some component is not orientable.
fn orient(mesh: &mut TriMesh) -> bool {
    let adjacency = edge_faces(&mesh.faces);
    let n = mesh.faces.len();
    let mut visited = vec![false; n];
    let mut orientable = true;
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut comp = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(fi) = queue.pop_front() {
            let f = mesh.faces[fi];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let neighbours = &adjacency[&edge_key(a, b)];
                if neighbours.len() != 2 {
                    continue;
                }
                let gi = if neighbours[0] == fi { neighbours[1] } else { neighbours[0] };
                let g = mesh.faces[gi];
                // consistent neighbours traverse the shared edge as b→a
                let same_direction = (0..3).any(|m| g[m] == a && g[(m + 1) % 3] == b);
                if visited[gi] {
                    if same_direction {
                        orientable = false;
                    }
                    continue;
                }
                if same_direction {
                    mesh.faces[gi] = [g[0], g[2], g[1]];
                }
                visited[gi] = true;
                comp.push(gi);
                queue.push_back(gi);
            }
        }
        if subset_watertight(mesh, &comp) && subset_volume(mesh, &comp) < 0.0 {
            for &fi in &comp {
                let f = mesh.faces[fi];
                mesh.faces[fi] = [f[0], f[2], f[1]];
            }
        }
    }
    orientable
}

/// Weld, strip degenerate and duplicate faces, drop unused vertices, fix winding and
/// optionally keep only the largest component.
pub fn cleanup(mesh: &TriMesh, options: &CleanupOptions) -> TriMesh {
    cleanup_with_report(mesh, options).0
}

pub fn cleanup_with_report(mesh: &TriMesh, options: &CleanupOptions) -> (TriMesh, CleanupReport) {
    let mut report = CleanupReport::default();
    let mut out = mesh.clone();
    if out.faces.is_empty() {
        return (out, report);
    }
    let map = weld_map(&out.vertices, options.weld_radius);
    report.welded_vertices = map.iter().enumerate().filter(|(i, r)| *i != **r).count();
    for f in &mut out.faces {
        *f = f.map(|i| map[i]);
    }
    report.removed_faces = remove_bad_faces(&out.vertices, &mut out.faces);
    compact(&mut out);

    let comps = components(&out);
    report.components = comps.len();
    if options.keep_largest && comps.len() > 1 {
        let score = |c: &Vec<usize>| {
            let volume = if subset_watertight(&out, c) { subset_volume(&out, c).abs() } else { 0.0 };
            (c.len(), volume)
        };
        let mut best = 0;
        let mut best_score = score(&comps[0]);
        for (i, c) in comps.iter().enumerate().skip(1) {
            let s = score(c);
            if s.0 > best_score.0 || (s.0 == best_score.0 && s.1 > best_score.1) {
                best = i;
                best_score = s;
            }
        }
        let mut keep = comps[best].clone();
        keep.sort_unstable();
        out.faces = keep.iter().map(|&f| out.faces[f]).collect();
        report.dropped_components = comps.len() - 1;
        compact(&mut out);
    }
    report.non_orientable = !orient(&mut out);
    out.normals = None;
    (out, report)
}
