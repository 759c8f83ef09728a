//! Alpha-shape surface extraction from a Delaunay tetrahedralization.
//!
//! The alpha complex holds every cell with circumradius `<= alpha`, every
//! facet of such a cell, and every facet whose circumradius is `<= alpha`
//! and whose diametral ball is empty (Gabriel). Space outside the shape is
//! found by flooding from the unbounded region through facets that are not
//! in the complex; all remaining cells form the solid. The surface is the
//! set of facets between solid and exterior, oriented away from the solid,
//! plus complex facets with exterior on both sides (open sheets).
//!
//! For samples of a closed surface no cell is small enough to keep, but the
//! surface facets still block the flood, so the shell is recovered.

use std::collections::{HashMap, VecDeque};

use log::warn;
use robust::orient3d;

use super::delaunay::{tri_circumcircle, Tetrahedralization};
use super::TriMesh;
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::spatial::KdTree;

pub const DEFAULT_ALPHA_FACTOR: f64 = 3.0;

/// Relative slack for the Gabriel test, so cocircular neighbours (regular
/// lattices) do not count as inside the diametral ball.
const GABRIEL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct AlphaShape<T> {
    pub mesh: TriMesh<T>,
    /// Per tetrahedron: part of the solid.
    pub solid: Vec<bool>,
    /// Faces coming from sheets with exterior on both sides.
    pub sheet_faces: usize,
}

/// `factor` × median nearest-neighbour distance.
pub fn suggest_alpha_with<T: Real>(points: &[Vec3<T>], factor: T) -> Result<T> {
    if points.len() < 2 {
        return Err(Error::Argument("alpha suggestion needs at least 2 points".into()));
    }
    let tree = KdTree::new(points);
    let mut nn: Vec<T> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            tree.knn(p, 2)
                .into_iter()
                .find(|n| n.index != i)
                .map_or(T::zero(), |n| n.dist_sq.sqrt())
        })
        .collect();
    nn.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = nn[(nn.len() - 1) / 2];
    if median <= T::zero() {
        return Err(Error::Degenerate(
            "median nearest-neighbour distance is zero (duplicate points); set alpha manually".into(),
        ));
    }
    Ok(factor * median)
}

/// [`suggest_alpha_with`] using the default factor of 3.
pub fn suggest_alpha<T: Real>(points: &[Vec3<T>]) -> Result<T> {
    suggest_alpha_with(points, T::lit(DEFAULT_ALPHA_FACTOR))
}

/// Extracts the alpha-shape boundary. Pass `T::infinity()` to keep every
/// cell, which yields the convex hull.
pub fn alpha_shape<T: Real>(tets: &Tetrahedralization<T>, alpha: T) -> Result<AlphaShape<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::Argument(format!("alpha must be > 0, got {alpha}")));
    }
    let a = alpha.as_f64();
    let n = tets.len();
    let small: Vec<bool> = (0..n).map(|t| a.is_infinite() || tets.circumsphere(t).1 <= a).collect();

    let pt = |i: usize| tets.points[i].cast::<f64>();
    let opposite = |t: usize, f: usize| -> Option<usize> {
        let nb = tets.adjacency[t][f]?;
        let facet = tets.facet(t, f);
        tets.tets[nb].iter().copied().find(|v| !facet.contains(v))
    };
    let in_complex = |t: usize, f: usize| -> bool {
        if small[t] || tets.adjacency[t][f].is_some_and(|nb| small[nb]) {
            return true;
        }
        let [p, q, r] = tets.facet(t, f).map(pt);
        let (c, rad) = tri_circumcircle(p, q, r);
        if rad > a {
            return false;
        }
        let limit = rad * rad * (1.0 - GABRIEL_SLACK);
        let mut opp = vec![tets.tets[t][f]];
        opp.extend(opposite(t, f));
        opp.into_iter().all(|v| pt(v).distance_squared(c) >= limit)
    };
    let complex: Vec<[bool; 4]> = (0..n)
        .map(|t| {
            let mut row = [false; 4];
            for (f, slot) in row.iter_mut().enumerate() {
                *slot = in_complex(t, f);
            }
            row
        })
        .collect();

    let mut exterior = vec![false; n];
    let mut queue = VecDeque::new();
    for t in 0..n {
        if (0..4).any(|f| tets.adjacency[t][f].is_none() && !complex[t][f]) {
            exterior[t] = true;
            queue.push_back(t);
        }
    }
    while let Some(t) = queue.pop_front() {
        for f in 0..4 {
            if let Some(nb) = tets.adjacency[t][f] {
                if !exterior[nb] && !complex[t][f] {
                    exterior[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    let solid: Vec<bool> = exterior.iter().map(|e| !e).collect();

    let mut faces = Vec::new();
    let mut provenance = Vec::new();
    let mut sheet = Vec::new();
    let mut sheet_prov = Vec::new();
    for t in 0..n {
        for f in 0..4 {
            let nb = tets.adjacency[t][f];
            if nb.is_some_and(|x| x < t) {
                continue;
            }
            let nb_solid = nb.is_some_and(|x| solid[x]);
            // normal points from t towards the neighbour
            let tri = oriented_facet(tets, t, f);
            match (solid[t], nb_solid) {
                (true, false) => {
                    faces.push(tri);
                    provenance.push(t);
                }
                (false, true) => {
                    faces.push([tri[0], tri[2], tri[1]]);
                    provenance.push(nb.expect("solid neighbour"));
                }
                (false, false) if complex[t][f] => {
                    sheet.push(tri);
                    sheet_prov.push(t);
                }
                _ => {}
            }
        }
    }

    let sheet_faces = sheet.len();
    if sheet_faces > 0 {
        let mut sheets = TriMesh {
            vertices: tets.points.clone(),
            faces: sheet,
            provenance: None,
        };
        sheets.orient_components();
        faces.extend(sheets.faces);
        provenance.extend(sheet_prov);
    }
    if faces.is_empty() {
        return Err(Error::EmptyMesh(format!(
            "no surface survives alpha = {alpha}; try a larger alpha"
        )));
    }

    let mut mesh = TriMesh {
        vertices: tets.points.clone(),
        faces,
        provenance: Some(provenance),
    };
    mesh.compact();
    if !mesh.is_closed() {
        warn!(
            "alpha shape is open: {} edges not shared by exactly two faces",
            mesh.open_edge_count()
        );
    }
    Ok(AlphaShape {
        mesh,
        solid,
        sheet_faces,
    })
}

/// Facet `f` of cell `t`, ordered so its normal points away from the
/// opposite vertex.
fn oriented_facet<T: Real>(tets: &Tetrahedralization<T>, t: usize, f: usize) -> [usize; 3] {
    let [a, b, c] = tets.facet(t, f);
    let o = orient3d(tets.coord(a), tets.coord(b), tets.coord(c), tets.coord(tets.tets[t][f]));
    if o > 0.0 {
        [a, b, c]
    } else {
        [a, c, b]
    }
}

/// Facet triangles keyed by sorted vertex triple; used by tests to compare
/// surfaces independent of vertex numbering.
pub fn facet_set<T: Real>(mesh: &TriMesh<T>) -> HashMap<[usize; 3], [usize; 3]> {
    mesh.faces
        .iter()
        .map(|f| {
            let mut k = *f;
            k.sort_unstable();
            (k, *f)
        })
        .collect()
}
