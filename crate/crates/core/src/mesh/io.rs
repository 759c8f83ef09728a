//! Wavefront OBJ (ASCII, 1-based) and binary STL export, plus OBJ import.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Stl,
}

impl MeshFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Obj => "obj",
            MeshFormat::Stl => "stl",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "stl" => Ok(MeshFormat::Stl),
            _ => Err(Error::Argument(format!("unknown mesh format '{s}' (obj, stl)"))),
        }
    }
}

/// OBJ text; coordinates use shortest round-trip formatting so re-import is
/// exact.
pub fn write_obj<T: Real>(mesh: &TriMesh<T>) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 20);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Parses `v` and `f` records. Polygon faces are fan-triangulated;
/// `v/vt/vn` references keep the vertex index only.
pub fn parse_obj<T: Real>(text: &str) -> Result<TriMesh<T>> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let bad = |what: &str| Error::Schema(format!("OBJ line {}: {what}", ln + 1));
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| bad("bad coordinate")))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(T::lit(c[0]), T::lit(c[1]), T::lit(c[2])));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                        let n = vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 || i >= n {
                            return Err(bad("face index out of range"));
                        }
                        Ok(i as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn import_obj<T: Real>(path: impl AsRef<Path>) -> Result<TriMesh<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

/// Binary STL: 80-byte header, u32 triangle count, 50 bytes per triangle.
pub fn write_stl<T: Real>(mesh: &TriMesh<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.faces.len());
    let mut header = [0u8; 80];
    let tag = b"binary STL";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.faces.len() as u32).to_le_bytes());
    for (i, f) in mesh.faces.iter().enumerate() {
        let n = mesh.face_normal(i);
        let n = if n.is_finite() { n } else { Vec3::zero() };
        for v in std::iter::once(n).chain(f.iter().map(|&k| mesh.vertices[k])) {
            for c in [v.x, v.y, v.z] {
                out.extend_from_slice(&c.as_f32().to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

pub fn export_mesh<T: Real>(mesh: &TriMesh<T>, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    mesh.validate()?;
    if !mesh.is_closed() {
        warn!("exporting open mesh {} as-is", path.display());
    }
    let bytes = match format {
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
        MeshFormat::Stl => write_stl(mesh),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
