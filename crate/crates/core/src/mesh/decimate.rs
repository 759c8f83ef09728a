//! Edge-collapse decimation with a tracked error bound.
//!
//! Every face owns a set of sample points from the input surface (vertices,
//! edge midpoints and face centroids). A collapse is scored by the largest
//! distance from the owned samples of the affected faces to the new fan, and
//! from the new vertex to the input surface, so the cheapest collapse is the
//! one that least increases the two-sided Hausdorff distance. Candidate
//! positions come from the area-weighted quadric error metric, which also
//! breaks ties. Boundary edges add a heavily weighted plane perpendicular to
//! the face so open borders stay put. Collapses are rejected when they would
//! break the link condition, create a duplicate face, or flip or flatten a
//! face. A final pass flips edges and nudges vertices wherever that lowers
//! the local error.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{point_triangle_distance, TriMesh};
use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;
use crate::spatial::KdTree;

const BOUNDARY_WEIGHT: f64 = 1e3;
/// Input faces checked when measuring a new vertex against the input surface.
const SURFACE_PROBE: usize = 12;
const REFINE_STEPS: usize = 4;
const POLISH_SWEEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecimateReport {
    pub input_faces: usize,
    pub output_faces: usize,
    pub target_faces: usize,
    pub collapses: usize,
    /// Every remaining collapse was rejected before reaching the target.
    pub stopped_early: bool,
}

#[derive(Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: Vec3<f64>, d: f64, w: f64) -> Self {
        let (a, b, c) = (n.x, n.y, n.z);
        Self([
            w * a * a,
            w * a * b,
            w * a * c,
            w * a * d,
            w * b * b,
            w * b * c,
            w * b * d,
            w * c * c,
            w * c * d,
            w * d * d,
        ])
    }

    fn add(&mut self, o: &Self) {
        for (x, y) in self.0.iter_mut().zip(o.0) {
            *x += y;
        }
    }

    fn sum(a: &Self, b: &Self) -> Self {
        let mut q = *a;
        q.add(b);
        q
    }

    fn eval(&self, p: Vec3<f64>) -> f64 {
        let q = &self.0;
        let (x, y, z) = (p.x, p.y, p.z);
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    /// Minimizer of the quadric when the system is well conditioned.
    fn optimum(&self, scale: f64) -> Option<Vec3<f64>> {
        let q = &self.0;
        let a = Mat3::from_rows([[q[0], q[1], q[2]], [q[1], q[4], q[5]], [q[2], q[5], q[7]]]);
        let det = a.determinant();
        let norm = a.m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if !(det.abs() > 1e-12 * norm * norm * norm) || norm == 0.0 {
            return None;
        }
        let p = a.inverse()?.mul_vec(Vec3::new(-q[3], -q[6], -q[8]));
        (p.is_finite() && p.norm() < 1e6 * scale.max(1.0)).then_some(p)
    }
}

#[derive(PartialEq)]
struct Candidate {
    error: f64,
    qem: f64,
    a: usize,
    b: usize,
    stamp: (u32, u32),
}

impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on error, then quadric cost, then vertex pair
        o.error
            .partial_cmp(&self.error)
            .unwrap_or(Ordering::Equal)
            .then(o.qem.partial_cmp(&self.qem).unwrap_or(Ordering::Equal))
            .then((o.a, o.b).cmp(&(self.a, self.b)))
    }
}

struct Plan {
    pos: Vec3<f64>,
    error: f64,
    qem: f64,
}

struct State {
    pos: Vec<Vec3<f64>>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vert_faces: Vec<Vec<usize>>,
    quadric: Vec<Quadric>,
    samples: Vec<Vec<Vec3<f64>>>,
    stamp: Vec<u32>,
    scale: f64,
    input: Vec<[Vec3<f64>; 3]>,
    input_tree: KdTree<f64>,
}

impl State {
    fn neighbours(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vert_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&x| x != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    /// Faces touching `a` or `b`, each once.
    fn region(&self, a: usize, b: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self.vert_faces[a].iter().chain(&self.vert_faces[b]).copied().collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Triangles replacing `region` when `a` and `b` merge at `p`.
    fn fan(&self, region: &[usize], a: usize, b: usize, p: Vec3<f64>) -> Vec<[Vec3<f64>; 3]> {
        region
            .iter()
            .filter(|&&f| !(self.faces[f].contains(&a) && self.faces[f].contains(&b)))
            .map(|&f| self.faces[f].map(|v| if v == a || v == b { p } else { self.pos[v] }))
            .collect()
    }

    fn surface_distance(&self, p: Vec3<f64>) -> f64 {
        self.input_tree
            .knn(p, SURFACE_PROBE)
            .into_iter()
            .map(|n| {
                let [x, y, z] = self.input[n.index];
                point_triangle_distance(p, x, y, z)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Local error of a proposed fan; stops early once `bound` is exceeded.
    fn error(&self, region: &[usize], fan: &[[Vec3<f64>; 3]], p: Vec3<f64>, bound: f64) -> f64 {
        if fan.is_empty() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for &f in region {
            for &s in &self.samples[f] {
                if worst >= bound {
                    return worst;
                }
                let mut d = f64::INFINITY;
                for t in fan {
                    d = d.min(point_triangle_distance(s, t[0], t[1], t[2]));
                    if d <= worst {
                        break;
                    }
                }
                worst = worst.max(d);
            }
        }
        if worst < bound {
            worst = worst.max(self.surface_distance(p));
        }
        worst
    }

    fn plan(&self, a: usize, b: usize) -> Plan {
        let q = Quadric::sum(&self.quadric[a], &self.quadric[b]);
        let mut options = vec![self.pos[a], self.pos[b], (self.pos[a] + self.pos[b]) * 0.5];
        options.extend(q.optimum(self.scale));
        // cheapest quadric first so the error bound prunes the rest early
        let mut options: Vec<(f64, Vec3<f64>)> = options.into_iter().map(|p| (q.eval(p).max(0.0), p)).collect();
        options.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        let region = self.region(a, b);
        let mut best = Plan {
            pos: options[0].1,
            error: f64::INFINITY,
            qem: options[0].0,
        };
        for (qem, p) in options {
            let fan = self.fan(&region, a, b, p);
            let error = self.error(&region, &fan, p, best.error);
            if error < best.error {
                best = Plan { pos: p, error, qem };
            }
        }
        best
    }

    fn candidate(&self, a: usize, b: usize) -> Candidate {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let plan = self.plan(a, b);
        Candidate {
            error: plan.error,
            qem: plan.qem,
            a,
            b,
            stamp: (self.stamp[a], self.stamp[b]),
        }
    }

    /// Attempts to merge `b` into `a`; returns false when rejected.
    fn collapse(&mut self, a: usize, b: usize) -> bool {
        let shared: Vec<usize> = self.vert_faces[a]
            .iter()
            .copied()
            .filter(|f| self.faces[*f].contains(&b))
            .collect();
        if shared.is_empty() {
            return false;
        }
        let na = self.neighbours(a);
        let nb = self.neighbours(b);
        let common = na.iter().filter(|x| nb.binary_search(x).is_ok()).count();
        if common != shared.len() {
            return false;
        }

        let p = self.plan(a, b).pos;
        // faces of b that survive, with b renamed to a
        for &f in &self.vert_faces[b] {
            if shared.contains(&f) {
                continue;
            }
            let mut nf = self.faces[f];
            for v in nf.iter_mut() {
                if *v == b {
                    *v = a;
                }
            }
            let mut key = nf;
            key.sort_unstable();
            let dup = self.vert_faces[a].iter().any(|&g| {
                let mut k = self.faces[g];
                k.sort_unstable();
                !shared.contains(&g) && k == key
            });
            if dup {
                return false;
            }
        }
        // orientation check on every surviving face touching a or b
        let eps = 1e-12 * self.scale * self.scale;
        for &f in self.vert_faces[a].iter().chain(&self.vert_faces[b]) {
            if shared.contains(&f) {
                continue;
            }
            let old = self.faces[f].map(|v| self.pos[v]);
            let new = self.faces[f].map(|v| if v == a || v == b { p } else { self.pos[v] });
            let n_old = (old[1] - old[0]).cross(old[2] - old[0]);
            let n_new = (new[1] - new[0]).cross(new[2] - new[0]);
            if n_new.norm() <= eps || n_old.dot(n_new) <= 0.0 {
                return false;
            }
        }

        let region = self.region(a, b);
        let orphans: Vec<Vec3<f64>> = region
            .iter()
            .flat_map(|&f| std::mem::take(&mut self.samples[f]))
            .collect();
        for &f in &shared {
            self.face_alive[f] = false;
            for v in self.faces[f] {
                self.vert_faces[v].retain(|&g| g != f);
            }
        }
        let moved = std::mem::take(&mut self.vert_faces[b]);
        for &f in &moved {
            for v in self.faces[f].iter_mut() {
                if *v == b {
                    *v = a;
                }
            }
        }
        self.vert_faces[a].extend(moved);
        self.vert_faces[a].sort_unstable();
        self.vert_faces[a].dedup();
        self.pos[a] = p;
        let qb = self.quadric[b];
        self.quadric[a].add(&qb);

        // hand every sample to its nearest face in the new fan
        let fan: Vec<(usize, [Vec3<f64>; 3])> = self.vert_faces[a]
            .iter()
            .map(|&f| (f, self.faces[f].map(|v| self.pos[v])))
            .collect();
        for s in orphans {
            let (f, _) = fan
                .iter()
                .map(|(f, t)| (*f, point_triangle_distance(s, t[0], t[1], t[2])))
                .fold((usize::MAX, f64::INFINITY), |m, x| if x.1 < m.1 { x } else { m });
            self.samples[f].push(s);
        }

        self.stamp[a] += 1;
        self.stamp[b] += 1;
        true
    }
}

impl State {
    /// Largest sample distance to `tris`; stops early once `bound` is reached.
    fn face_error(&self, samples: &[Vec3<f64>], tris: &[[Vec3<f64>; 3]], bound: f64) -> f64 {
        let mut worst = 0.0f64;
        for &s in samples {
            if worst >= bound {
                break;
            }
            let mut d = f64::INFINITY;
            for t in tris {
                d = d.min(point_triangle_distance(s, t[0], t[1], t[2]));
                if d <= worst {
                    break;
                }
            }
            worst = worst.max(d);
        }
        worst
    }

    fn redistribute(&mut self, faces: &[usize], samples: Vec<Vec3<f64>>) {
        let tris: Vec<[Vec3<f64>; 3]> = faces.iter().map(|&f| self.faces[f].map(|v| self.pos[v])).collect();
        for s in samples {
            let k = tris
                .iter()
                .map(|t| point_triangle_distance(s, t[0], t[1], t[2]))
                .enumerate()
                .fold((0, f64::INFINITY), |m, x| if x.1 < m.1 { x } else { m })
                .0;
            self.samples[faces[k]].push(s);
        }
    }

    /// Flips the edge shared by faces `f` and `g` when that lowers the
    /// local error without folding the surface.
    fn try_flip(&mut self, f: usize, g: usize) -> bool {
        let (ff, gg) = (self.faces[f], self.faces[g]);
        // rotate f so its shared edge is (a, b) with opposite vertex c
        let Some(k) = (0..3).find(|&k| {
            let (a, b) = (ff[k], ff[(k + 1) % 3]);
            (0..3).any(|j| gg[j] == b && gg[(j + 1) % 3] == a)
        }) else {
            return false;
        };
        let (a, b, c) = (ff[k], ff[(k + 1) % 3], ff[(k + 2) % 3]);
        let Some(&d) = gg.iter().find(|&&x| x != a && x != b) else {
            return false;
        };
        if c == d || self.vert_faces[c].iter().any(|&h| self.faces[h].contains(&d)) {
            return false;
        }
        let p = |v: usize| self.pos[v];
        let nf = [c, a, d];
        let ng = [d, b, c];
        let normal = |t: [usize; 3]| (p(t[1]) - p(t[0])).cross(p(t[2]) - p(t[0]));
        let reference = normal(ff) + normal(gg);
        let eps = 1e-12 * self.scale * self.scale;
        for t in [nf, ng] {
            let n = normal(t);
            if n.norm() <= eps || n.dot(reference) <= 0.0 {
                return false;
            }
        }
        let mut samples = self.samples[f].clone();
        samples.extend_from_slice(&self.samples[g]);
        let before = self.face_error(&samples, &[ff.map(p), gg.map(p)], f64::INFINITY);
        let after = self.face_error(&samples, &[nf.map(p), ng.map(p)], before);
        if !(after < before * (1.0 - 1e-9)) {
            return false;
        }
        for v in [a, b] {
            self.vert_faces[v].retain(|&h| h != f && h != g);
        }
        self.faces[f] = nf;
        self.faces[g] = ng;
        self.vert_faces[a].push(f);
        self.vert_faces[b].push(g);
        self.vert_faces[c].push(g);
        self.vert_faces[d].push(f);
        for v in [a, b, c, d] {
            self.vert_faces[v].sort_unstable();
            self.vert_faces[v].dedup();
        }
        self.samples[f].clear();
        self.samples[g].clear();
        self.redistribute(&[f, g], samples);
        true
    }

    /// Moves `v` along its normal when that lowers the local error.
    fn relax(&mut self, v: usize) -> bool {
        let region = self.vert_faces[v].clone();
        let normal = region
            .iter()
            .map(|&f| {
                let [x, y, z] = self.faces[f].map(|u| self.pos[u]);
                (y - x).cross(z - x)
            })
            .fold(Vec3::zero(), |acc, n| acc + n);
        if !(normal.norm() > 0.0) {
            return false;
        }
        let n = normal.normalized();
        let samples: Vec<Vec3<f64>> = region.iter().flat_map(|&f| self.samples[f].iter().copied()).collect();
        let score = |st: &Self, q: Vec3<f64>, bound: f64| -> f64 {
            let tris: Vec<[Vec3<f64>; 3]> = region
                .iter()
                .map(|&f| st.faces[f].map(|u| if u == v { q } else { st.pos[u] }))
                .collect();
            let e = st.face_error(&samples, &tris, bound);
            if e >= bound {
                return e;
            }
            e.max(st.surface_distance(q))
        };
        let start = self.pos[v];
        let mut best = (start, score(self, start, f64::INFINITY));
        let mut step = best.1 * 0.5;
        if !(step > 0.0) {
            return false;
        }
        let helper = if n.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let t1 = n.cross(helper).normalized();
        let t2 = n.cross(t1);
        // tangential steps are scaled to the ring so they can even out faces
        let ring = region
            .iter()
            .flat_map(|&f| self.faces[f])
            .map(|u| self.pos[u].distance(start))
            .fold(0.0, f64::max);
        let mut tstep = ring * 0.25;
        for _ in 0..REFINE_STEPS {
            for (dir, len) in [
                (n, step),
                (-n, step),
                (t1, tstep),
                (-t1, tstep),
                (t2, tstep),
                (-t2, tstep),
            ] {
                let q = best.0 + dir * len;
                let e = score(self, q, best.1);
                if e < best.1 {
                    best = (q, e);
                }
            }
            step *= 0.5;
            tstep *= 0.5;
        }
        if best.0 == start {
            return false;
        }
        // the move must not flip or flatten any face
        let eps = 1e-12 * self.scale * self.scale;
        for &f in &region {
            let old = self.faces[f].map(|u| self.pos[u]);
            let new = self.faces[f].map(|u| if u == v { best.0 } else { self.pos[u] });
            let n_old = (old[1] - old[0]).cross(old[2] - old[0]);
            let n_new = (new[1] - new[0]).cross(new[2] - new[0]);
            if n_new.norm() <= eps || n_old.dot(n_new) <= 0.0 {
                return false;
            }
        }
        self.pos[v] = best.0;
        for &f in &region {
            self.samples[f].clear();
        }
        self.redistribute(&region, samples);
        true
    }

    /// Alternating edge-flip and vertex-relaxation sweeps; each sweep only
    /// revisits vertices near the previous sweep's changes.
    fn polish(&mut self, sweeps: usize) {
        let mut dirty: Vec<bool> = self.vert_faces.iter().map(|f| !f.is_empty()).collect();
        for _ in 0..sweeps {
            let mut next = vec![false; self.pos.len()];
            let mut changed = false;
            for f in 0..self.faces.len() {
                if !self.face_alive[f] || !self.faces[f].iter().any(|&v| dirty[v]) {
                    continue;
                }
                for k in 0..3 {
                    let (a, b) = (self.faces[f][k], self.faces[f][(k + 1) % 3]);
                    let other = self.vert_faces[a]
                        .iter()
                        .copied()
                        .find(|&g| g != f && self.faces[g].contains(&b));
                    if let Some(g) = other {
                        if g > f && self.try_flip(f, g) {
                            for v in self.faces[f].into_iter().chain(self.faces[g]) {
                                next[v] = true;
                            }
                            changed = true;
                            break;
                        }
                    }
                }
            }
            for v in 0..self.pos.len() {
                if dirty[v] && self.relax(v) {
                    next[v] = true;
                    for u in self.neighbours(v) {
                        next[u] = true;
                    }
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            dirty = next;
        }
    }
}

/// Collapses edges until at most `target_faces` faces remain or no legal
/// collapse is left.
pub fn decimate<T: Real>(mesh: &TriMesh<T>, target_faces: usize) -> Result<(TriMesh<T>, DecimateReport)> {
    if target_faces < 4 {
        return Err(Error::Argument(format!(
            "target_faces must be >= 4, got {target_faces}"
        )));
    }
    mesh.validate()?;
    let input_faces = mesh.faces.len();
    if input_faces <= target_faces {
        let mut out = mesh.clone();
        out.provenance = None;
        return Ok((
            out,
            DecimateReport {
                input_faces,
                output_faces: input_faces,
                target_faces,
                collapses: 0,
                stopped_early: false,
            },
        ));
    }

    let pos: Vec<Vec3<f64>> = mesh.vertices.iter().map(|v| v.cast()).collect();
    let scale = {
        let (mut lo, mut hi) = (pos[0], pos[0]);
        for &p in &pos {
            lo = lo.component_min(p);
            hi = hi.component_max(p);
        }
        (hi - lo).norm().max(f64::MIN_POSITIVE)
    };
    let nv = pos.len();
    let input: Vec<[Vec3<f64>; 3]> = mesh.faces.iter().map(|f| f.map(|v| pos[v])).collect();
    let centroids: Vec<Vec3<f64>> = input.iter().map(|t| (t[0] + t[1] + t[2]) * (1.0 / 3.0)).collect();
    let mut samples: Vec<Vec<Vec3<f64>>> = centroids.iter().map(|&c| vec![c]).collect();
    let mut vertex_owned = vec![false; nv];
    let mut edge_owned = std::collections::HashSet::new();
    for (i, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if !vertex_owned[a] {
                vertex_owned[a] = true;
                samples[i].push(pos[a]);
            }
            if edge_owned.insert(super::undirected(a, b)) {
                samples[i].push((pos[a] + pos[b]) * 0.5);
            }
        }
    }
    let mut st = State {
        pos,
        faces: mesh.faces.clone(),
        face_alive: vec![true; input_faces],
        vert_faces: vec![Vec::new(); nv],
        quadric: vec![Quadric::default(); nv],
        samples,
        stamp: vec![0; nv],
        scale,
        input_tree: KdTree::new(&centroids),
        input,
    };
    for (i, f) in st.faces.iter().enumerate() {
        for &v in f {
            st.vert_faces[v].push(i);
        }
    }
    let edge_counts = mesh.edge_face_counts();
    for f in &st.faces {
        let [p0, p1, p2] = f.map(|v| st.pos[v]);
        let n = (p1 - p0).cross(p2 - p0);
        let area = n.norm() * 0.5;
        if area == 0.0 {
            continue;
        }
        let n = n * (1.0 / (2.0 * area));
        let q = Quadric::plane(n, -n.dot(p0), area);
        for &v in f {
            st.quadric[v].add(&q);
        }
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if edge_counts[&super::undirected(a, b)] == 1 {
                let e = st.pos[b] - st.pos[a];
                let side = e.cross(n).normalized();
                let q = Quadric::plane(side, -side.dot(st.pos[a]), BOUNDARY_WEIGHT * e.norm_squared());
                st.quadric[a].add(&q);
                st.quadric[b].add(&q);
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut edges: Vec<(usize, usize)> = edge_counts.keys().copied().collect();
    edges.sort_unstable();
    for (a, b) in edges {
        heap.push(st.candidate(a, b));
    }

    let mut alive = input_faces;
    let mut collapses = 0;
    while alive > target_faces {
        let Some(c) = heap.pop() else { break };
        if (st.stamp[c.a], st.stamp[c.b]) != c.stamp {
            continue;
        }
        // collapses nearby may have changed this edge's faces; rescore lazily
        let fresh = st.candidate(c.a, c.b);
        if fresh.error > c.error {
            heap.push(fresh);
            continue;
        }
        let before = st.vert_faces[c.a]
            .iter()
            .filter(|f| st.faces[**f].contains(&c.b))
            .count();
        if !st.collapse(c.a, c.b) {
            continue;
        }
        alive -= before;
        collapses += 1;
        for nb in st.neighbours(c.a) {
            heap.push(st.candidate(c.a, nb));
        }
    }

    st.polish(POLISH_SWEEPS);

    let faces: Vec<[usize; 3]> = st
        .faces
        .iter()
        .zip(&st.face_alive)
        .filter(|(_, &a)| a)
        .map(|(f, _)| *f)
        .collect();
    let mut out = TriMesh {
        vertices: st.pos.iter().map(|p| p.cast()).collect(),
        faces,
        provenance: None,
    };
    out.compact();
    let output_faces = out.faces.len();
    Ok((
        out,
        DecimateReport {
            input_faces,
            output_faces,
            target_faces,
            collapses,
            stopped_early: output_faces > target_faces,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{box_mesh, uv_sphere};

    #[test]
    fn cube_at_target_is_unchanged() {
        let b = box_mesh(Vec3::new(1.0, 1.0, 1.0));
        let (out, rep) = decimate(&b, 12).unwrap();
        assert_eq!(out, b);
        assert_eq!(rep.collapses, 0);
    }

    #[test]
    fn sphere_to_100_faces_stays_closed() {
        let s = uv_sphere(1.0, 32, 16);
        let (out, rep) = decimate(&s, 100).unwrap();
        assert!(out.faces.len() <= 100, "{rep:?}");
        assert!(out.is_closed() && out.is_consistently_oriented());
        assert_eq!(out.euler_characteristic(), 2);
    }

    #[test]
    fn tetrahedron_cannot_shrink() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let m = TriMesh::new(pts, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap();
        let (out, rep) = decimate(&m, 4).unwrap();
        assert_eq!(out.faces.len(), 4);
        assert!(!rep.stopped_early);
        assert!(decimate(&m, 3).is_err());
    }
}
