//! Python bindings: meshes, URDF kinematics, watertight repair, silhouettes,
//! metrics and the hierarchical attention update.

use std::collections::BTreeMap;
use std::path::PathBuf;

use artikit::attention::{hierarchy_update, HierarchyVariant, LatentStack};
use artikit::kinematics::{forward_kinematics, JointConfiguration, Se3Transform};
use artikit::mesh::{read_obj, write_obj};
use artikit::render::{camera_on_sphere, soft_silhouette, SoftRasterSettings};
use artikit::urdf::{parse_urdf, write_urdf};
use artikit::voxel::{make_watertight, WatertightOptions, WatertightReport};
use nalgebra::{DMatrix, Vector3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: artikit::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn points(rows: Vec<[f64; 3]>) -> Vec<Vector3<f64>> {
    rows.into_iter().map(Vector3::from).collect()
}

fn matrix_rows(t: &Se3Transform) -> Vec<Vec<f64>> {
    let h = t.to_homogeneous();
    (0..4).map(|r| (0..4).map(|c| h[(r, c)]).collect()).collect()
}

/// Triangle mesh with `f64` vertices.
#[pyclass(name = "TriMesh", from_py_object)]
#[derive(Clone)]
struct PyTriMesh {
    inner: artikit::mesh::TriMesh,
}

#[pymethods]
impl PyTriMesh {
    #[new]
    fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            inner: artikit::mesh::TriMesh::new(points(vertices), faces),
        }
    }

    #[staticmethod]
    fn cuboid(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self {
            inner: artikit::mesh::TriMesh::cuboid(lo.into(), hi.into()),
        }
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_obj(&path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_obj(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces.clone()
    }

    fn extents(&self) -> Option<[f64; 3]> {
        self.inner.extents().map(|e| [e.x, e.y, e.z])
    }

    fn signed_volume(&self) -> f64 {
        self.inner.signed_volume()
    }

    fn is_watertight(&self) -> bool {
        artikit::mesh::is_watertight(&self.inner)
    }

    /// Closed copy of the mesh plus a short description of what was done.
    #[pyo3(signature = (resolution = 200, min_cells = 3, mem_cap_mb = 400))]
    fn watertight(&self, resolution: u32, min_cells: u32, mem_cap_mb: u64) -> PyResult<(PyTriMesh, String)> {
        let opts = WatertightOptions {
            resolution,
            min_cells,
            mem_cap_bytes: mem_cap_mb << 20,
        };
        let (mesh, report) = make_watertight(&self.inner, &opts).map_err(to_py)?;
        let note = match report {
            WatertightReport::EarlyExit => "early exit".to_string(),
            WatertightReport::Voxelized { pitch, .. } => format!("voxelized at pitch {:.6}", pitch.pitch),
        };
        Ok((PyTriMesh { inner: mesh }, note))
    }

    /// Uniform surface samples.
    #[pyo3(signature = (count, seed = 0))]
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<[f64; 3]>> {
        let set = artikit::mesh::sample_surface(&self.inner, count, seed).map_err(to_py)?;
        Ok(set.points.iter().map(|p| [p.x, p.y, p.z]).collect())
    }

    fn __repr__(&self) -> String {
        format!("TriMesh(vertices={}, faces={})", self.inner.vertices.len(), self.inner.faces.len())
    }
}

/// Parsed URDF tree.
#[pyclass(name = "UrdfModel")]
struct PyUrdfModel {
    inner: artikit::urdf::UrdfModel,
}

#[pymethods]
impl PyUrdfModel {
    #[staticmethod]
    fn parse(xml: &str) -> PyResult<Self> {
        let (inner, _) = parse_urdf(xml).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn links(&self) -> Vec<String> {
        self.inner.links.iter().map(|l| l.name.clone()).collect()
    }

    /// `(name, type, parent, child)` per joint.
    #[getter]
    fn joints(&self) -> Vec<(String, String, String, String)> {
        self.inner
            .joints
            .iter()
            .map(|j| (j.name.clone(), j.kind.as_str().to_string(), j.parent.clone(), j.child.clone()))
            .collect()
    }

    fn to_xml(&self) -> String {
        write_urdf(&self.inner)
    }

    /// World transform of every link's visual frame as nested 4x4 lists.
    #[pyo3(signature = (config = None))]
    fn forward_kinematics(&self, config: Option<BTreeMap<String, f64>>) -> PyResult<BTreeMap<String, Vec<Vec<f64>>>> {
        let config = JointConfiguration(config.unwrap_or_default());
        let fk = forward_kinematics(&self.inner, &config).map_err(to_py)?;
        Ok(self
            .inner
            .links
            .iter()
            .zip(&fk.visual_world)
            .map(|(l, t)| (l.name.clone(), matrix_rows(t)))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("UrdfModel({:?}, links={}, joints={})", self.inner.name, self.inner.links.len(), self.inner.joints.len())
    }
}

/// Soft silhouette of `meshes` seen from a camera on a sphere; rows of floats in [0, 1].
#[pyfunction]
#[pyo3(signature = (meshes, azimuth = 45.0, elevation = 25.0, resolution = 128, radius = 4.0, fov = 40.0))]
fn render_silhouette(
    meshes: Vec<PyTriMesh>,
    azimuth: f64,
    elevation: f64,
    resolution: usize,
    radius: f64,
    fov: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let cam = camera_on_sphere(azimuth, elevation, radius, fov, resolution).map_err(to_py)?;
    let meshes: Vec<_> = meshes.into_iter().map(|m| m.inner).collect();
    let img = soft_silhouette(&cam, &meshes, &SoftRasterSettings::default()).map_err(to_py)?;
    Ok(img.values.chunks(img.width).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
fn chamfer(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> PyResult<f64> {
    artikit::metrics::chamfer(&points(a), &points(b)).map_err(to_py)
}

#[pyfunction]
fn fscore(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>, tau: f64) -> PyResult<f64> {
    artikit::metrics::fscore(&points(a), &points(b), tau).map_err(to_py)
}

/// Child-to-parent then parent-to-child masked attention over per-part tokens.
#[pyfunction]
#[pyo3(signature = (values, tokens_per_part, parents, variant = "updated_values"))]
fn attention_update(
    values: Vec<Vec<f64>>,
    tokens_per_part: usize,
    parents: Vec<Option<usize>>,
    variant: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let variant = match variant {
        "updated_values" => HierarchyVariant::UpdatedValues,
        "input_values" => HierarchyVariant::InputValues,
        other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
    };
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    if values.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged value rows"));
    }
    let z = DMatrix::from_row_iterator(rows, cols, values.into_iter().flatten());
    let stack = LatentStack::uniform(z, tokens_per_part, parents).map_err(to_py)?;
    let out = hierarchy_update(&stack, variant).map_err(to_py)?;
    Ok(out.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pymodule(name = "artikit")]
fn artikit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTriMesh>()?;
    m.add_class::<PyUrdfModel>()?;
    m.add_function(wrap_pyfunction!(render_silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(fscore, m)?)?;
    m.add_function(wrap_pyfunction!(attention_update, m)?)?;
    Ok(())
}
