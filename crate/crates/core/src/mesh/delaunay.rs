//! Incremental 3-D Delaunay tetrahedralization (Bowyer–Watson).
//!
//! The triangulation is closed with an infinite vertex so the convex hull
//! needs no special casing: every hull facet is shared with an infinite
//! cell. Orientation and in-sphere tests use Shewchuk's adaptive exact
//! predicates. A cell conflicts with a new point only when the point lies
//! strictly inside its circumsphere, so cospherical ties keep the existing
//! cells.

use std::collections::HashMap;

use log::debug;
use robust::{insphere, orient3d, Coord3D};

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

const INF: usize = usize::MAX;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Tetrahedralization<T> {
    pub points: Vec<Vec3<T>>,
    /// Finite cells as indices into `points`, positively oriented.
    pub tets: Vec<[usize; 4]>,
    /// Neighbour across the facet opposite each vertex; `None` on the hull.
    pub adjacency: Vec<[Option<usize>; 4]>,
    /// Inputs skipped because they coincide with an earlier point.
    pub duplicates: Vec<usize>,
}

impl<T: Real> Tetrahedralization<T> {
    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    /// Vertices of facet `f` of cell `t` (the three other than `tets[t][f]`).
    pub fn facet(&self, t: usize, f: usize) -> [usize; 3] {
        let v = self.tets[t];
        let mut out = [0; 3];
        let mut k = 0;
        for (i, &x) in v.iter().enumerate() {
            if i != f {
                out[k] = x;
                k += 1;
            }
        }
        out
    }

    pub fn coord(&self, i: usize) -> Coord3D<f64> {
        coord(self.points[i])
    }

    /// Circumcentre and circumradius of cell `t`.
    pub fn circumsphere(&self, t: usize) -> (Vec3<f64>, f64) {
        let [a, b, c, d] = self.tets[t].map(|i| self.points[i].cast::<f64>());
        tet_circumsphere(a, b, c, d)
    }
}

#[inline]
pub(crate) fn coord<T: Real>(p: Vec3<T>) -> Coord3D<f64> {
    Coord3D {
        x: p.x.as_f64(),
        y: p.y.as_f64(),
        z: p.z.as_f64(),
    }
}

/// Circumsphere of a tetrahedron; the radius is infinite when flat.
pub fn tet_circumsphere(a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>, d: Vec3<f64>) -> (Vec3<f64>, f64) {
    let (u, v, w) = (b - a, c - a, d - a);
    let det = 2.0 * u.dot(v.cross(w));
    if det == 0.0 {
        return (a, f64::INFINITY);
    }
    let off =
        (v.cross(w) * u.norm_squared() + w.cross(u) * v.norm_squared() + u.cross(v) * w.norm_squared()) * (1.0 / det);
    (a + off, off.norm())
}

/// Circumcentre and circumradius of a triangle.
pub fn tri_circumcircle(a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>) -> (Vec3<f64>, f64) {
    let (u, v) = (b - a, c - a);
    let n = u.cross(v);
    let den = 2.0 * n.norm_squared();
    if den == 0.0 {
        return (a, f64::INFINITY);
    }
    let off = (v * u.norm_squared() - u * v.norm_squared()).cross(n) * (1.0 / den);
    (a + off, off.norm())
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    v: [usize; 4],
    n: [usize; 4],
}

struct Builder {
    pts: Vec<Coord3D<f64>>,
    cells: Vec<Cell>,
    alive: Vec<bool>,
    free: Vec<usize>,
    last: usize,
    rng: u64,
    mark: Vec<u32>,
    stamp: u32,
}

impl Builder {
    fn next_rand(&mut self) -> u64 {
        // xorshift64
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 7;
        self.rng ^= self.rng << 17;
        self.rng
    }

    fn alloc(&mut self, c: Cell) -> usize {
        if let Some(i) = self.free.pop() {
            self.cells[i] = c;
            self.alive[i] = true;
            i
        } else {
            self.cells.push(c);
            self.alive.push(true);
            self.mark.push(0);
            self.cells.len() - 1
        }
    }

    fn is_infinite(&self, c: usize) -> bool {
        self.cells[c].v.contains(&INF)
    }

    fn orient_with(&self, c: usize, slot: usize, p: Coord3D<f64>) -> f64 {
        let v = self.cells[c].v;
        let q = |i: usize| if i == slot { p } else { self.pts[v[i]] };
        orient3d(q(0), q(1), q(2), q(3))
    }

    /// Strict conflict: `p` lies inside the circumsphere, or for infinite
    /// cells strictly beyond the hull facet or inside its circumcircle.
    fn conflicts(&self, c: usize, p: Coord3D<f64>) -> bool {
        let v = self.cells[c].v;
        match v.iter().position(|&x| x == INF) {
            None => insphere(self.pts[v[0]], self.pts[v[1]], self.pts[v[2]], self.pts[v[3]], p) > 0.0,
            Some(k) => {
                let o = self.orient_with(c, k, p);
                if o != 0.0 {
                    return o > 0.0;
                }
                let f: Vec<Coord3D<f64>> = (0..4).filter(|&i| i != k).map(|i| self.pts[v[i]]).collect();
                in_circumcircle(f[0], f[1], f[2], p)
            }
        }
    }

    /// Remembering stochastic walk to a cell in conflict with `p`. Returns
    /// `None` when no such cell exists (duplicate point).
    fn locate(&mut self, p: Coord3D<f64>) -> Option<usize> {
        let mut c = self.last;
        if !self.alive[c] {
            c = (0..self.cells.len()).find(|&i| self.alive[i]).expect("live cell");
        }
        if self.is_infinite(c) {
            let k = self.cells[c].v.iter().position(|&x| x == INF).expect("infinite vertex");
            c = self.cells[c].n[k];
        }
        let mut prev = NONE;
        let max_steps = 4 * self.cells.len() + 64;
        for _ in 0..max_steps {
            if self.is_infinite(c) {
                if self.conflicts(c, p) {
                    return Some(c);
                }
                break;
            }
            let start = (self.next_rand() % 4) as usize;
            let mut moved = false;
            for j in 0..4 {
                let f = (start + j) % 4;
                let nb = self.cells[c].n[f];
                if nb == prev {
                    continue;
                }
                if self.orient_with(c, f, p) < 0.0 {
                    prev = c;
                    c = nb;
                    moved = true;
                    break;
                }
            }
            if !moved {
                // `prev` was skipped; make sure p is not beyond that facet
                if prev != NONE {
                    if let Some(f) = self.cells[c].n.iter().position(|&x| x == prev) {
                        if self.orient_with(c, f, p) < 0.0 {
                            std::mem::swap(&mut prev, &mut c);
                            continue;
                        }
                    }
                }
                if self.conflicts(c, p) {
                    return Some(c);
                }
                break;
            }
        }
        debug!("walk did not reach a conflicting cell, scanning all cells");
        (0..self.cells.len()).find(|&i| self.alive[i] && self.conflicts(i, p))
    }

    fn insert(&mut self, pi: usize) -> bool {
        let p = self.pts[pi];
        let Some(start) = self.locate(p) else {
            return false;
        };
        self.stamp += 1;
        let stamp = self.stamp;
        let mut region = vec![start];
        self.mark[start] = stamp;
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        let mut k = 0;
        while k < region.len() {
            let c = region[k];
            k += 1;
            for f in 0..4 {
                let nb = self.cells[c].n[f];
                if self.mark[nb] == stamp {
                    continue;
                }
                if self.conflicts(nb, p) {
                    self.mark[nb] = stamp;
                    region.push(nb);
                } else {
                    boundary.push((c, f));
                }
            }
        }

        let mut edge_map: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(boundary.len() * 3);
        let mut created = Vec::with_capacity(boundary.len());
        for &(c, f) in &boundary {
            let old = self.cells[c];
            let outer = old.n[f];
            let mut v = old.v;
            v[f] = pi;
            let mut n = [NONE; 4];
            n[f] = outer;
            let nc = self.alloc(Cell { v, n });
            created.push(nc);
            let back = self.cells[outer]
                .n
                .iter()
                .position(|&x| x == c)
                .expect("mutual adjacency");
            self.cells[outer].n[back] = nc;
            for j in 0..4 {
                if j == f {
                    continue;
                }
                let mut e = [0usize; 2];
                let mut m = 0;
                for (i, &x) in v.iter().enumerate() {
                    if i != j && i != f {
                        e[m] = x;
                        m += 1;
                    }
                }
                let key = if e[0] < e[1] { (e[0], e[1]) } else { (e[1], e[0]) };
                match edge_map.remove(&key) {
                    Some((oc, oj)) => {
                        self.cells[nc].n[j] = oc;
                        self.cells[oc].n[oj] = nc;
                    }
                    None => {
                        edge_map.insert(key, (nc, j));
                    }
                }
            }
        }
        debug_assert!(edge_map.is_empty(), "unmatched cavity facets");
        for &c in &region {
            self.alive[c] = false;
            self.free.push(c);
        }
        self.last = created[0];
        true
    }
}

/// Whether `p`, coplanar with triangle `abc`, lies strictly inside its
/// circumcircle. Lifts an auxiliary point off the plane so the exact
/// in-sphere predicate can be reused.
fn in_circumcircle(a: Coord3D<f64>, b: Coord3D<f64>, c: Coord3D<f64>, p: Coord3D<f64>) -> bool {
    // any point off the plane works; a computed normal can vanish for
    // near-collinear triangles, so try the axis offsets instead
    let l = [b.x - a.x, b.y - a.y, b.z - a.z, c.x - a.x, c.y - a.y, c.z - a.z]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let mut best = (0.0f64, a);
    for axis in 0..3 {
        let mut d = a;
        match axis {
            0 => d.x += l,
            1 => d.y += l,
            _ => d.z += l,
        }
        let o = orient3d(a, b, c, d);
        if o.abs() > best.0.abs() {
            best = (o, d);
        }
    }
    let (o, d) = best;
    if o == 0.0 {
        return false;
    }
    insphere(a, b, c, d, p) * o.signum() > 0.0
}

fn morton_order<T: Real>(points: &[Vec3<T>]) -> Vec<usize> {
    let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
    for p in points {
        let a = p.to_f64_array();
        for k in 0..3 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(a[k]);
        }
    }
    let ext = (0..3).map(|k| hi[k] - lo[k]).fold(0.0f64, f64::max).max(1e-300);
    let spread = |x: u64| {
        let mut x = x & 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        (x | x << 2) & 0x1249249249249249
    };
    let mut keyed: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = p.to_f64_array();
            let q = |k: usize| (((a[k] - lo[k]) / ext) * 2_097_151.0) as u64;
            (spread(q(0)) | spread(q(1)) << 1 | spread(q(2)) << 2, i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Delaunay tetrahedralization of `points`.
///
/// Points are inserted in Morton order, so the result is a deterministic
/// function of the input. Fails with [`Error::Degenerate`] when fewer than
/// four points are given or all of them are coplanar.
pub fn delaunay3d<T: Real>(points: &[Vec3<T>]) -> Result<Tetrahedralization<T>> {
    let fallback = "fall back to convex-hull-of-points meshing";
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "Delaunay needs at least 4 points, got {}; {fallback}",
            points.len()
        )));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::Validation(format!("point {i} is not finite")));
    }
    let pts: Vec<Coord3D<f64>> = points.iter().map(|&p| coord(p)).collect();
    let order = morton_order(points);

    // initial simplex: first four affinely independent points in order
    let a = order[0];
    let same = |i: usize, j: usize| pts[i].x == pts[j].x && pts[i].y == pts[j].y && pts[i].z == pts[j].z;
    let b = order.iter().copied().find(|&i| !same(i, a));
    let c = b.and_then(|b| order.iter().copied().find(|&i| !collinear(pts[a], pts[b], pts[i])));
    let d = c.and_then(|c| {
        order
            .iter()
            .copied()
            .find(|&i| orient3d(pts[a], pts[b.unwrap()], pts[c], pts[i]) != 0.0)
    });
    let (Some(b), Some(c), Some(d)) = (b, c, d) else {
        return Err(Error::Degenerate(format!("all points are coplanar; {fallback}")));
    };
    let (a, b) = if orient3d(pts[a], pts[b], pts[c], pts[d]) > 0.0 {
        (a, b)
    } else {
        (b, a)
    };

    let mut bld = Builder {
        pts,
        cells: Vec::new(),
        alive: Vec::new(),
        free: Vec::new(),
        last: 0,
        rng: 0x9e37_79b9_7f4a_7c15,
        mark: Vec::new(),
        stamp: 0,
    };
    let base = [a, b, c, d];
    bld.alloc(Cell { v: base, n: [NONE; 4] });
    for f in 0..4 {
        // replace the vertex opposite facet f by infinity and swap two
        // others so the infinite cell is oriented like its finite mirror
        let mut v = base;
        v[f] = INF;
        let (s, t) = match f {
            0 => (1, 2),
            _ => (0, if f == 1 { 2 } else { 1 }),
        };
        v.swap(s, t);
        bld.alloc(Cell { v, n: [NONE; 4] });
    }
    link_all(&mut bld.cells);

    let mut duplicates = Vec::new();
    let initial = [a, b, c, d];
    for &i in &order {
        if initial.contains(&i) {
            continue;
        }
        if !bld.insert(i) {
            duplicates.push(i);
        }
    }
    duplicates.sort_unstable();

    // compact finite cells
    let mut remap = vec![NONE; bld.cells.len()];
    let mut tets = Vec::new();
    for (i, cell) in bld.cells.iter().enumerate() {
        if bld.alive[i] && !cell.v.contains(&INF) {
            remap[i] = tets.len();
            tets.push(cell.v);
        }
    }
    let adjacency = bld
        .cells
        .iter()
        .enumerate()
        .filter(|(i, cell)| bld.alive[*i] && !cell.v.contains(&INF))
        .map(|(_, cell)| cell.n.map(|nb| (remap[nb] != NONE).then_some(remap[nb])))
        .collect();
    Ok(Tetrahedralization {
        points: points.to_vec(),
        tets,
        adjacency,
        duplicates,
    })
}

fn collinear(a: Coord3D<f64>, b: Coord3D<f64>, c: Coord3D<f64>) -> bool {
    use robust::{orient2d, Coord};
    let xy = orient2d(
        Coord { x: a.x, y: a.y },
        Coord { x: b.x, y: b.y },
        Coord { x: c.x, y: c.y },
    );
    let yz = orient2d(
        Coord { x: a.y, y: a.z },
        Coord { x: b.y, y: b.z },
        Coord { x: c.y, y: c.z },
    );
    let zx = orient2d(
        Coord { x: a.z, y: a.x },
        Coord { x: b.z, y: b.x },
        Coord { x: c.z, y: c.x },
    );
    xy == 0.0 && yz == 0.0 && zx == 0.0
}

/// Fills neighbour links by matching facets; used for the initial cells.
fn link_all(cells: &mut [Cell]) {
    let mut map: HashMap<[usize; 3], (usize, usize)> = HashMap::new();
    for c in 0..cells.len() {
        for f in 0..4 {
            let mut key = [0; 3];
            let mut k = 0;
            for (i, &x) in cells[c].v.iter().enumerate() {
                if i != f {
                    key[k] = x;
                    k += 1;
                }
            }
            key.sort_unstable();
            if let Some((oc, of)) = map.remove(&key) {
                cells[c].n[f] = oc;
                cells[oc].n[of] = c;
            } else {
                map.insert(key, (c, f));
            }
        }
    }
    debug_assert!(map.is_empty());
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn single_tetrahedron() {
        let t = delaunay3d(&[v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.)]).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.adjacency[0].iter().all(Option::is_none));
    }

    #[test]
    fn coplanar_and_tiny_inputs_are_degenerate() {
        assert!(matches!(
            delaunay3d(&[v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)]),
            Err(Error::Degenerate(_))
        ));
        let flat: Vec<_> = (0..10).map(|i| v(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(matches!(delaunay3d(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn circumsphere_formulas() {
        let (c, r) = tet_circumsphere(v(1., 0., 0.), v(-1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.));
        assert!(c.norm() < 1e-12 && (r - 1.0).abs() < 1e-12);
        let (c, r) = tri_circumcircle(v(0., 0., 0.), v(2., 0., 0.), v(0., 2., 0.));
        assert!((c - v(1., 1., 0.)).norm() < 1e-12 && (r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn duplicates_are_reported() {
        let mut p = vec![
            v(0., 0., 0.),
            v(1., 0., 0.),
            v(0., 1., 0.),
            v(0., 0., 1.),
            v(1., 1., 1.),
        ];
        p.push(p[4]);
        let t = delaunay3d(&p).unwrap();
        assert_eq!(t.duplicates.len(), 1);
    }
}
