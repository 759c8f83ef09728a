//! Binary little-endian PLY reader/writer for 3DGS splat files.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{Quat, Vec3};
use crate::scalar::Real;
use crate::splat::{GaussianSplat, SplatCloud};

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
    "rot_3",
];

const IGNORED: [&str; 3] = ["nx", "ny", "nz"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarKind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    kind: ScalarKind,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    has_list: bool,
}

struct Header {
    len: usize,
    elements: Vec<Element>,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Schema("missing end_header".into()))?;
    let len = end + marker.len();
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Schema("header is not valid UTF-8".into()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Schema("file does not start with 'ply'".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Schema(format!(
                        "unsupported PLY format '{fmt}', expected binary_little_endian"
                    )));
                }
                format_ok = true;
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::Schema(format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    has_list: false,
                });
            }
            ["property", "list", ..] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Schema("property before element".into()))?;
                el.has_list = true;
            }
            ["property", kind, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Schema("property before element".into()))?;
                let kind =
                    ScalarKind::parse(kind).ok_or_else(|| Error::Schema(format!("unknown property type '{kind}'")))?;
                el.props.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            other => {
                return Err(Error::Schema(format!("unrecognized header line {other:?}")));
            }
        }
    }
    if !format_ok {
        return Err(Error::Schema("missing format line".into()));
    }
    Ok(Header { len, elements })
}

fn read_scalar(kind: ScalarKind, b: &[u8]) -> f64 {
    match kind {
        ScalarKind::I8 => b[0] as i8 as f64,
        ScalarKind::U8 => b[0] as f64,
        ScalarKind::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
        ScalarKind::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
        ScalarKind::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        ScalarKind::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        ScalarKind::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        ScalarKind::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
    }
}

/// Loads a 3DGS splat PLY.
pub fn load_ply<T: Real>(path: impl AsRef<Path>) -> Result<SplatCloud<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cloud = parse_ply(&bytes)?;
    cloud.source_path = Some(path.display().to_string());
    Ok(cloud)
}

/// Parses an in-memory PLY image; see [`load_ply`].
pub fn parse_ply<T: Real>(bytes: &[u8]) -> Result<SplatCloud<T>> {
    let header = parse_header(bytes)?;
    let mut offset = header.len;
    let mut vertex = None;
    for el in &header.elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        if el.count > 0 {
            if el.has_list {
                return Err(Error::Schema(format!(
                    "element '{}' with list properties precedes vertex data",
                    el.name
                )));
            }
            offset += el.count * el.props.iter().map(|p| p.kind.size()).sum::<usize>();
        }
    }
    let vertex = vertex.ok_or_else(|| Error::Schema("no 'vertex' element".into()))?;
    if vertex.has_list {
        return Err(Error::Schema("vertex element has list properties".into()));
    }

    let mut columns: HashMap<&str, (usize, ScalarKind)> = HashMap::new();
    let mut stride = 0usize;
    for p in &vertex.props {
        columns.insert(p.name.as_str(), (stride, p.kind));
        stride += p.kind.size();
    }
    for name in REQUIRED {
        if !columns.contains_key(name) {
            return Err(Error::Schema(format!("missing required property '{name}'")));
        }
    }
    let mut rest: Vec<(usize, usize, ScalarKind)> = Vec::new();
    for p in &vertex.props {
        let name = p.name.as_str();
        if let Some(idx) = name.strip_prefix("f_rest_") {
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Schema(format!("bad SH property name '{name}'")))?;
            let (off, kind) = columns[name];
            rest.push((idx, off, kind));
        } else if !REQUIRED.contains(&name) && !IGNORED.contains(&name) {
            warn!("skipping unknown vertex property '{name}'");
        }
    }
    rest.sort_by_key(|r| r.0);
    if rest.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::Schema("f_rest_* properties are not contiguous from 0".into()));
    }

    let expected = (offset + vertex.count * stride) as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
            expected,
        });
    }

    let col = |name: &str| columns[name];
    let cols: Vec<(usize, ScalarKind)> = REQUIRED.iter().map(|n| col(n)).collect();
    let mut splats = Vec::with_capacity(vertex.count);
    for i in 0..vertex.count {
        let row = &bytes[offset + i * stride..offset + (i + 1) * stride];
        let f = |k: usize| {
            let (off, kind) = cols[k];
            T::lit(read_scalar(kind, &row[off..]))
        };
        splats.push(GaussianSplat {
            position: Vec3::new(f(0), f(1), f(2)),
            colour_dc: [f(3), f(4), f(5)],
            opacity_logit: f(6),
            log_scale: Vec3::new(f(7), f(8), f(9)),
            rotation: Quat::new(f(10), f(11), f(12), f(13)),
            colour_rest: rest
                .iter()
                .map(|&(_, off, kind)| T::lit(read_scalar(kind, &row[off..])))
                .collect(),
        });
    }
    SplatCloud::new(splats)
}

/// Serializes a cloud into the canonical float32 layout.
pub fn encode_ply<T: Real>(cloud: &SplatCloud<T>) -> Result<Vec<u8>> {
    let rest_len = cloud.rest_len();
    if let Some(i) = cloud.splats.iter().position(|s| s.colour_rest.len() != rest_len) {
        return Err(Error::Validation(format!(
            "splat {i} has a different number of higher-order colour coefficients"
        )));
    }
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..rest_len).map(|i| format!("f_rest_{i}")));
    names.extend(
        [
            "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");

    let mut out = Vec::with_capacity(header.len() + cloud.len() * names.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for s in &cloud.splats {
        let mut put = |v: T| out.extend_from_slice(&v.as_f32().to_le_bytes());
        put(s.position.x);
        put(s.position.y);
        put(s.position.z);
        s.colour_dc.iter().for_each(|&c| put(c));
        s.colour_rest.iter().for_each(|&c| put(c));
        put(s.opacity_logit);
        put(s.log_scale.x);
        put(s.log_scale.y);
        put(s.log_scale.z);
        put(s.rotation.w);
        put(s.rotation.x);
        put(s.rotation.y);
        put(s.rotation.z);
    }
    Ok(out)
}

pub fn save_ply<T: Real>(cloud: &SplatCloud<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ply(cloud)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
