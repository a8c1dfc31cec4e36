//! Wavefront OBJ geometry (v/vn/f records); polygons are fan-triangulated.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::TriMesh;
use crate::error::{Error, Result};

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as u32,
        column: 1,
        message: message.into(),
    }
}

fn resolve(token: &str, count: usize, line: usize) -> Result<usize> {
    let raw: i64 = token
        .parse()
        .map_err(|_| bad(line, format!("bad index {token:?}")))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        return Err(bad(line, "OBJ indices are 1-based"));
    };
    if idx < 0 || idx as usize >= count {
        return Err(bad(line, format!("index {raw} out of range ({count} entries)")));
    }
    Ok(idx as usize)
}

/// Parse OBJ text. Materials, texture coordinates, groups and other records are ignored.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut vn = Vec::new();
    let mut faces = Vec::new();
    let mut vertex_normal: Vec<Option<usize>> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xyz: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad(line_no, format!("bad coordinate {t:?}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad(line_no, "vertex needs three coordinates"));
                }
                vertices.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
                vertex_normal.push(None);
            }
            Some("vn") => {
                let xyz: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad(line_no, format!("bad normal {t:?}"))))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad(line_no, "normal needs three components"));
                }
                vn.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), vertices.len(), line_no)?;
                    let _uv = parts.next();
                    if let Some(n) = parts.next().filter(|s| !s.is_empty()) {
                        vertex_normal[v] = Some(resolve(n, vn.len(), line_no)?);
                    }
                    poly.push(v);
                }
                if poly.len() < 3 {
                    return Err(bad(line_no, "face needs at least three vertices"));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let normals = if !vertices.is_empty() && vertex_normal.iter().all(Option::is_some) {
        Some(vertex_normal.iter().map(|n| vn[n.unwrap()]).collect())
    } else {
        None
    };
    Ok(TriMesh {
        vertices,
        faces,
        normals,
        face_color: [255, 255, 255, 255],
    })
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn write_obj_string(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            let _ = writeln!(out, "vn {} {} {}", n.x, n.y, n.z);
        }
        for f in &mesh.faces {
            let [a, b, c] = f.map(|i| i + 1);
            let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
        }
    } else {
        for f in &mesh.faces {
            let [a, b, c] = f.map(|i| i + 1);
            let _ = writeln!(out, "f {a} {b} {c}");
        }
    }
    out
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
