//! Indexed triangle meshes and the surface reconstruction pipeline:
//! Delaunay tetrahedralization, alpha-shape extraction, quadric decimation
//! and OBJ/STL export.

pub mod alpha;
pub mod decimate;
pub mod delaunay;
pub mod io;

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

pub use alpha::{alpha_shape, suggest_alpha, suggest_alpha_with, AlphaShape, DEFAULT_ALPHA_FACTOR};
pub use decimate::{decimate, DecimateReport};
pub use delaunay::{delaunay3d, Tetrahedralization};
pub use io::{export_mesh, import_obj, parse_obj, write_obj, write_stl, MeshFormat};

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[usize; 3]>,
    /// Originating tetrahedron per face, when produced by an alpha shape.
    pub provenance: Option<Vec<usize>>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = Self {
            vertices,
            faces,
            provenance: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Validation(format!("face {i} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Validation(format!("face {i} repeats a vertex")));
            }
        }
        if let Some(p) = &self.provenance {
            if p.len() != self.faces.len() {
                return Err(Error::Validation("provenance length differs from face count".into()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Number of faces on each undirected edge.
    pub fn edge_face_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *m.entry(undirected(f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every edge borders exactly two faces.
    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().values().all(|&c| c == 2)
    }

    pub fn open_edge_count(&self) -> usize {
        self.edge_face_counts().values().filter(|&&c| c != 2).count()
    }

    /// Each directed edge is used at most once, so neighbouring faces agree
    /// on orientation.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.faces
            .iter()
            .all(|f| (0..3).all(|k| seen.insert((f[k], f[(k + 1) % 3]))))
    }

    /// V − E + F over the vertices referenced by faces.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_face_counts().len() as i64 + self.faces.len() as i64
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i].cast::<f64>());
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    pub fn surface_area(&self) -> f64 {
        self.faces.iter().map(|&f| self.face_area(f)).sum()
    }

    fn face_area(&self, f: [usize; 3]) -> f64 {
        let [a, b, c] = f.map(|i| self.vertices[i].cast::<f64>());
        (b - a).cross(c - a).norm() * 0.5
    }

    pub fn face_normal(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.faces[f].map(|i| self.vertices[i]);
        (b - a).cross(c - a).normalized()
    }

    /// Face components under edge adjacency, as a label per face.
    pub fn face_components(&self) -> (usize, Vec<usize>) {
        let adj = self.face_adjacency();
        let mut comp = vec![usize::MAX; self.faces.len()];
        let mut n = 0;
        for s in 0..self.faces.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = n;
            let mut queue = VecDeque::from([s]);
            while let Some(f) = queue.pop_front() {
                for &(g, _) in &adj[f] {
                    if comp[g] == usize::MAX {
                        comp[g] = n;
                        queue.push_back(g);
                    }
                }
            }
            n += 1;
        }
        (n, comp)
    }

    pub fn component_count(&self) -> usize {
        self.face_components().0
    }

    /// Neighbouring faces across each edge, with whether the shared edge
    /// runs in the same direction in both (i.e. orientations disagree).
    fn face_adjacency(&self) -> Vec<Vec<(usize, bool)>> {
        let mut by_edge: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
        for (i, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                by_edge.entry(undirected(a, b)).or_default().push((i, a < b));
            }
        }
        let mut adj = vec![Vec::new(); self.faces.len()];
        for faces in by_edge.values() {
            for &(i, di) in faces {
                for &(j, dj) in faces {
                    if i != j {
                        adj[i].push((j, di == dj));
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Makes orientation consistent within each edge-connected component
    /// (breadth-first from the lowest face index), then flips closed
    /// components whose signed volume is negative. Returns the number of
    /// faces flipped.
    pub fn orient_components(&mut self) -> usize {
        let adj = self.face_adjacency();
        let nf = self.faces.len();
        let mut flip = vec![false; nf];
        let mut seen = vec![false; nf];
        let mut flipped = 0;
        for s in 0..nf {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut members = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(f) = queue.pop_front() {
                for &(g, same_dir) in &adj[f] {
                    if !seen[g] {
                        seen[g] = true;
                        flip[g] = flip[f] ^ same_dir;
                        members.push(g);
                        queue.push_back(g);
                    }
                }
            }
            let vol: f64 = members
                .iter()
                .map(|&f| {
                    let [a, b, c] = self.faces[f].map(|i| self.vertices[i].cast::<f64>());
                    let v = a.dot(b.cross(c)) / 6.0;
                    if flip[f] {
                        -v
                    } else {
                        v
                    }
                })
                .sum();
            if vol < 0.0 {
                for &f in &members {
                    flip[f] = !flip[f];
                }
            }
            for &f in &members {
                if flip[f] {
                    self.faces[f].swap(1, 2);
                    flipped += 1;
                }
            }
        }
        flipped
    }

    /// Drops unreferenced vertices, renumbering faces.
    pub fn compact(&mut self) {
        let mut map = vec![usize::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for f in &mut self.faces {
            for v in f.iter_mut() {
                if map[*v] == usize::MAX {
                    map[*v] = verts.len();
                    verts.push(self.vertices[*v]);
                }
                *v = map[*v];
            }
        }
        self.vertices = verts;
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

#[inline]
/// Distance from `p` to the closed triangle `abc` (closest-feature walk
/// over vertex, edge and face regions).
pub fn point_triangle_distance(p: Vec3<f64>, a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>) -> f64 {
    let (ab, ac, ap) = (b - a, c - a, p - a);
    let (d1, d2) = (ab.dot(ap), ac.dot(ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return p.distance(a);
    }
    let bp = p - b;
    let (d3, d4) = (ab.dot(bp), ac.dot(bp));
    if d3 >= 0.0 && d4 <= d3 {
        return p.distance(b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return p.distance(a + ab * (d1 / (d1 - d3)));
    }
    let cp = p - c;
    let (d5, d6) = (ab.dot(cp), ac.dot(cp));
    if d6 >= 0.0 && d5 <= d6 {
        return p.distance(c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return p.distance(a + ac * (d2 / (d2 - d6)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return p.distance(b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))));
    }
    let denom = va + vb + vc;
    if !(denom.abs() > 0.0) {
        // degenerate triangle: fall back to the edges
        let seg = |s: Vec3<f64>, e: Vec3<f64>| {
            let d = e - s;
            let l = d.norm_squared();
            let t = if l > 0.0 {
                ((p - s).dot(d) / l).clamp(0.0, 1.0)
            } else {
                0.0
            };
            p.distance(s + d * t)
        };
        return seg(a, b).min(seg(b, c)).min(seg(c, a));
    }
    p.distance(a + ab * (vb / denom) + ac * (vc / denom))
}

pub(crate) fn undirected(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Axis-aligned box centred at the origin, outward oriented, 12 faces.
pub fn box_mesh<T: Real>(size: Vec3<T>) -> TriMesh<T> {
    let h = size * T::lit(0.5);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriMesh {
        vertices,
        faces,
        provenance: None,
    }
}

/// Latitude/longitude sphere: `segments` around, `rings` pole to pole,
/// giving `2 · segments · (rings − 1)` faces.
pub fn uv_sphere<T: Real>(radius: T, segments: usize, rings: usize) -> TriMesh<T> {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = vec![Vec3::new(T::zero(), T::zero(), radius)];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Vec3::new(
                T::lit(theta.sin() * phi.cos()) * radius,
                T::lit(theta.sin() * phi.sin()) * radius,
                T::lit(theta.cos()) * radius,
            ));
        }
    }
    let south = vertices.len();
    vertices.push(Vec3::new(T::zero(), T::zero(), -radius));
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    TriMesh {
        vertices,
        faces,
        provenance: None,
    }
}

/// Closed cylinder along z centred at the origin.
pub fn cylinder_mesh<T: Real>(radius: T, height: T, segments: usize) -> TriMesh<T> {
    assert!(segments >= 3);
    let hz = height * T::lit(0.5);
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for z in [-hz, hz] {
        for s in 0..segments {
            let phi = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Vec3::new(T::lit(phi.cos()) * radius, T::lit(phi.sin()) * radius, z));
        }
    }
    let (bottom, top) = (vertices.len(), vertices.len() + 1);
    vertices.push(Vec3::new(T::zero(), T::zero(), -hz));
    vertices.push(Vec3::new(T::zero(), T::zero(), hz));
    let mut faces = Vec::new();
    for s in 0..segments {
        let n = (s + 1) % segments;
        faces.push([s, n, segments + n]);
        faces.push([s, segments + n, segments + s]);
        faces.push([bottom, n, s]);
        faces.push([top, segments + s, segments + n]);
    }
    TriMesh {
        vertices,
        faces,
        provenance: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_meshes_are_closed_and_outward() {
        let b = box_mesh(Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(b.faces.len(), 12);
        assert!(b.is_closed() && b.is_consistently_oriented());
        assert!((b.signed_volume() - 1.0).abs() < 1e-12);
        assert_eq!(b.euler_characteristic(), 2);

        let s = uv_sphere(1.0, 32, 16);
        assert_eq!(s.faces.len(), 960);
        assert!(s.is_closed() && s.is_consistently_oriented() && s.signed_volume() > 0.0);

        let c = cylinder_mesh(0.5, 2.0, 24);
        assert!(c.is_closed() && c.is_consistently_oriented() && c.signed_volume() > 0.0);
        assert_eq!(c.euler_characteristic(), 2);
    }

    #[test]
    fn orientation_repair_restores_outward_box() {
        let mut b = box_mesh(Vec3::new(2.0, 1.0, 1.0));
        for f in b.faces.iter_mut().step_by(3) {
            f.swap(0, 1);
        }
        for f in &mut b.faces {
            f.swap(1, 2);
        }
        b.orient_components();
        assert!(b.is_consistently_oriented());
        assert!((b.signed_volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn compact_drops_unused_vertices() {
        let mut m = TriMesh::new(
            vec![
                Vec3::zero(),
                Vec3::new(9.0, 9.0, 9.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 2, 3]],
        )
        .unwrap();
        m.compact();
        assert_eq!(m.vertices.len(), 3);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn degenerate_face_rejected() {
        assert!(TriMesh::new(vec![Vec3::<f64>::zero(); 3], vec![[0, 0, 1]]).is_err());
    }
}
