//! Watertight part preprocessing: pitch selection, surface voxelization, solid
//! fill, marching cubes, axis-wise rescale and the composed pipeline.

mod mc;
mod overlap;

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{cleanup, cleanup_with_report, is_watertight, CleanupOptions, TriMesh};

pub use mc::marching_cubes;
pub use overlap::triangle_box_overlap;

pub const DEFAULT_RESOLUTION: u32 = 200;
pub const DEFAULT_MIN_CELLS: u32 = 3;
pub const DEFAULT_MEM_CAP_BYTES: u64 = 400 * (1 << 20);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PitchSelection {
    pub pitch: f64,
    pub pitch_res: f64,
    pub pitch_thin: f64,
    pub grid_shape: [u64; 3],
    /// One byte per cell.
    pub estimated_bytes: u64,
    pub relaxed: bool,
}

fn grid_shape(extents: &Vector3<f64>, pitch: f64) -> [u64; 3] {
    [0, 1, 2].map(|i| ((extents[i] / pitch).ceil() as u64).max(1))
}

const PADDING: usize = 2;

fn product(n: &[u64; 3]) -> u64 {
    n.iter().fold(1u64, |acc, &x| acc.saturating_mul(x))
}

/// Choose the voxel pitch for a part with bounding-box `extents`.
pub fn select_pitch(extents: Vector3<f64>, resolution: u32, min_cells: u32, mem_cap_bytes: u64) -> Result<PitchSelection> {
    if extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!(
            "extents must be strictly positive, got {:?}",
            extents.as_slice()
        )));
    }
    if resolution == 0 || min_cells == 0 {
        return Err(Error::Argument("resolution and minimum cell count must be at least 1".into()));
    }
    let pitch_res = extents.max() / resolution as f64;
    let pitch_thin = extents.min() / min_cells as f64;
    let mut pitch = pitch_res.min(pitch_thin);
    let mut shape = grid_shape(&extents, pitch);
    let mut bytes = product(&shape);
    let mut relaxed = false;
    if bytes > mem_cap_bytes {
        relaxed = true;
        let mut factor = (bytes as f64 / mem_cap_bytes.max(1) as f64).cbrt();
        loop {
            let candidate = pitch * factor;
            let s = grid_shape(&extents, candidate);
            if product(&s) <= mem_cap_bytes {
                pitch = candidate;
                shape = s;
                bytes = product(&s);
                break;
            }
            factor *= 1.0005;
        }
    }
    Ok(PitchSelection {
        pitch,
        pitch_res,
        pitch_thin,
        grid_shape: shape,
        estimated_bytes: bytes,
        relaxed,
    })
}

/// Dense boolean voxel grid; cell `(i, j, k)` spans `origin + [i, i+1)·pitch` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub shape: [usize; 3],
    pub origin: Vector3<f64>,
    pub pitch: f64,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(shape: [usize; 3], origin: Vector3<f64>, pitch: f64) -> Self {
        Self {
            shape,
            origin,
            pitch,
            cells: vec![false; shape[0] * shape[1] * shape[2]],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.cells[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.cells[idx] = value;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cell_min(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.pitch
    }
}

/// Mark every cell touched by a triangle. The grid covers the mesh bounds plus two
/// cells of padding on every side, so a face lying on a cell boundary still
/// leaves an empty outer layer.
pub fn voxelize(mesh: &TriMesh, pitch: f64) -> Result<OccupancyGrid> {
    if mesh.faces.is_empty() {
        return Err(Error::Domain("cannot voxelize an empty mesh".into()));
    }
    if !(pitch > 0.0) || !pitch.is_finite() {
        return Err(Error::Domain(format!("pitch must be positive, got {pitch}")));
    }
    mesh.validate()?;
    let (lo, hi) = mesh.bounds().expect("faces imply vertices");
    let extents = hi - lo;
    let interior = grid_shape(&extents.map(|e| e.max(f64::MIN_POSITIVE)), pitch);
    let shape = interior.map(|n| n as usize + 2 * PADDING);
    let origin = lo - Vector3::repeat(pitch * PADDING as f64);
    let mut grid = OccupancyGrid::empty(shape, origin, pitch);
    let half = Vector3::repeat(pitch * 0.5);
    let cell_of = |x: f64, axis: usize| -> i64 { ((x - origin[axis]) / pitch).floor() as i64 };
    for f in 0..mesh.faces.len() {
        let tri = mesh.triangle(f);
        let tmin = tri[0].inf(&tri[1]).inf(&tri[2]);
        let tmax = tri[0].sup(&tri[1]).sup(&tri[2]);
        let mut range = [(0usize, 0usize); 3];
        for a in 0..3 {
            let s = (cell_of(tmin[a], a) - 1).max(0) as usize;
            let e = ((cell_of(tmax[a], a) + 1).max(0) as usize).min(shape[a] - 1);
            range[a] = (s, e);
        }
        for k in range[2].0..=range[2].1 {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    let idx = grid.index(i, j, k);
                    if grid.cells[idx] {
                        continue;
                    }
                    let center = grid.cell_min(i, j, k) + half;
                    if triangle_box_overlap(&center, &half, &tri) {
                        grid.cells[idx] = true;
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Occupy everything not reachable from the border through empty cells (6-connected).
pub fn fill_solid(grid: &OccupancyGrid) -> OccupancyGrid {
    let [nx, ny, nz] = grid.shape;
    let mut exterior = vec![false; grid.cells.len()];
    let mut queue = VecDeque::new();
    let seed = |i: usize, j: usize, k: usize, exterior: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize, usize)>| {
        let idx = grid.index(i, j, k);
        if !grid.cells[idx] && !exterior[idx] {
            exterior[idx] = true;
            queue.push_back((i, j, k));
        }
    };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 {
                    seed(i, j, k, &mut exterior, &mut queue);
                }
            }
        }
    }
    while let Some((i, j, k)) = queue.pop_front() {
        let mut visit = |a: usize, b: usize, c: usize| seed(a, b, c, &mut exterior, &mut queue);
        if i > 0 {
            visit(i - 1, j, k);
        }
        if i + 1 < nx {
            visit(i + 1, j, k);
        }
        if j > 0 {
            visit(i, j - 1, k);
        }
        if j + 1 < ny {
            visit(i, j + 1, k);
        }
        if k > 0 {
            visit(i, j, k - 1);
        }
        if k + 1 < nz {
            visit(i, j, k + 1);
        }
    }
    OccupancyGrid {
        shape: grid.shape,
        origin: grid.origin,
        pitch: grid.pitch,
        cells: exterior.into_iter().map(|e| !e).collect(),
    }
}

/// Anisotropically rescale `shell` about its bbox center so its extents become
/// `original_extents`, then move it to `original_center`.
pub fn rescale_to_extents(
    shell: &TriMesh,
    original_center: Vector3<f64>,
    original_extents: Vector3<f64>,
    eps: f64,
) -> TriMesh {
    let Some((lo, hi)) = shell.bounds() else {
        return shell.clone();
    };
    let center = (lo + hi) * 0.5;
    let ext = hi - lo;
    let scale = Vector3::from_fn(|i, _| original_extents[i] / ext[i].max(eps));
    shell.map_vertices(|v| (v - center).component_mul(&scale) + original_center)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WatertightOptions {
    pub resolution: u32,
    pub min_cells: u32,
    pub mem_cap_bytes: u64,
}

impl Default for WatertightOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            min_cells: DEFAULT_MIN_CELLS,
            mem_cap_bytes: DEFAULT_MEM_CAP_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum WatertightReport {
    EarlyExit,
    Voxelized {
        #[serde(flatten)]
        pitch: PitchSelection,
        occupied_cells: usize,
    },
}

/// Early exit when the cleaned input is already a single closed component; otherwise
/// voxelize, fill, extract, rescale to the input extents and clean up.
pub fn make_watertight(mesh: &TriMesh, options: &WatertightOptions) -> Result<(TriMesh, WatertightReport)> {
    if mesh.faces.is_empty() {
        return Err(Error::Domain("cannot make an empty mesh watertight".into()));
    }
    mesh.validate()?;
    let (cleaned, report) = cleanup_with_report(
        mesh,
        &CleanupOptions {
            keep_largest: false,
            ..Default::default()
        },
    );
    if report.components == 1 && is_watertight(&cleaned) {
        return Ok((cleaned, WatertightReport::EarlyExit));
    }

    let (lo, hi) = mesh.bounds().expect("non-empty");
    let (center, extents) = ((lo + hi) * 0.5, hi - lo);
    // flat inputs still get a grid; the final rescale restores the zero extent
    let guarded = extents.map(|e| e.max(extents.max() * 1e-6).max(f64::MIN_POSITIVE));
    let selection = select_pitch(guarded, options.resolution, options.min_cells, options.mem_cap_bytes)?;
    let grid = fill_solid(&voxelize(mesh, selection.pitch)?);
    let occupied_cells = grid.occupied_count();
    if occupied_cells == 0 {
        return Err(Error::Processing("voxelization produced no occupied cells".into()));
    }
    let shell = marching_cubes(&grid)?;
    let rescaled = rescale_to_extents(&shell, center, extents, 1e-12);
    let mut out = cleanup(&rescaled, &CleanupOptions::default());
    out.face_color = mesh.face_color;
    if !is_watertight(&out) {
        return Err(Error::Processing("extracted surface is not watertight".into()));
    }
    Ok((
        out,
        WatertightReport::Voxelized {
            pitch: selection,
            occupied_cells,
        },
    ))
}
