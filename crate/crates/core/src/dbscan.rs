//! Density-based clustering (DBSCAN) in one and three dimensions.
//!
//! Conventions, shared with the brute-force reference in the tests:
//!
//! * a point's ε-neighbourhood includes the point itself and every point at
//!   distance `<= eps`;
//! * a point is *core* when its neighbourhood holds at least `min_samples`
//!   points;
//! * clusters are the connected components of core points under
//!   ε-adjacency, numbered by their smallest core index;
//! * a non-core point within `eps` of a core point is a *border* point and
//!   joins the cluster of its lowest-index core neighbour; everything else
//!   is noise.

use rayon::prelude::*;

use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::spatial::KdTree;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id per point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    pub core: Vec<bool>,
    pub n_clusters: usize,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for l in self.labels.iter().flatten() {
            sizes[*l] += 1;
        }
        sizes
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Largest cluster by member count; ties go to the cluster holding the
    /// smallest point index.
    pub fn largest(&self) -> Option<usize> {
        let sizes = self.sizes();
        let mut first_member = vec![usize::MAX; self.n_clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = *l {
                first_member[c] = first_member[c].min(i);
            }
        }
        (0..self.n_clusters).min_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first_member[a].cmp(&first_member[b])))
    }

    /// Member indices of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(c))
            .map(|(i, _)| i)
            .collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes the root
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Assigns cluster ids from core connectivity and border attachments.
fn finish(n: usize, core: Vec<bool>, uf: &mut UnionFind, border_core: &[Option<usize>]) -> Clustering {
    let mut id_of_root = vec![usize::MAX; n];
    let mut n_clusters = 0;
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            let r = uf.find(i);
            if id_of_root[r] == usize::MAX {
                id_of_root[r] = n_clusters;
                n_clusters += 1;
            }
            labels[i] = Some(id_of_root[r]);
        }
    }
    for i in 0..n {
        if !core[i] {
            if let Some(c) = border_core[i] {
                labels[i] = Some(id_of_root[uf.find(c)]);
            }
        }
    }
    Clustering {
        labels,
        core,
        n_clusters,
    }
}

const CHUNK: usize = 4096;

/// DBSCAN over 3-D points.
pub fn dbscan<T: Real>(points: &[Vec3<T>], eps: T, min_samples: usize) -> Clustering {
    let n = points.len();
    let tree = KdTree::new(points);
    let core: Vec<bool> = points
        .par_iter()
        .map(|&p| tree.count_within(p, eps) >= min_samples)
        .collect();

    let mut uf = UnionFind::new(n);
    let mut border_core = vec![None; n];
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let found: Vec<(Vec<usize>, Option<usize>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut nb = Vec::new();
                tree.within_into(points[i], eps, &mut nb);
                if core[i] {
                    nb.retain(|&j| j > i && core[j]);
                    (nb, None)
                } else {
                    let first = nb.into_iter().filter(|&j| core[j]).min();
                    (Vec::new(), first)
                }
            })
            .collect();
        for (off, (links, first_core)) in found.into_iter().enumerate() {
            let i = start + off;
            for j in links {
                uf.union(i, j);
            }
            border_core[i] = first_core;
        }
    }
    finish(n, core, &mut uf, &border_core)
}

/// DBSCAN over scalar values (e.g. camera depths).
pub fn dbscan_1d<T: Real>(values: &[T], eps: T, min_samples: usize) -> Clustering {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let sorted: Vec<T> = order.iter().map(|&i| values[i]).collect();

    // window [lo, hi) of sorted positions within eps of position k
    let mut windows = vec![(0usize, 0usize); n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for k in 0..n {
        while sorted[k] - sorted[lo] > eps {
            lo += 1;
        }
        if hi < k + 1 {
            hi = k + 1;
        }
        while hi < n && sorted[hi] - sorted[k] <= eps {
            hi += 1;
        }
        windows[k] = (lo, hi);
    }

    let mut core = vec![false; n];
    for k in 0..n {
        let (lo, hi) = windows[k];
        core[order[k]] = hi - lo >= min_samples;
    }

    let mut uf = UnionFind::new(n);
    let mut prev_core: Option<usize> = None;
    for k in 0..n {
        if core[order[k]] {
            if let Some(p) = prev_core {
                if sorted[k] - sorted[p] <= eps {
                    uf.union(order[p], order[k]);
                }
            }
            prev_core = Some(k);
        }
    }

    let mut border_core = vec![None; n];
    for k in 0..n {
        let i = order[k];
        if !core[i] {
            let (lo, hi) = windows[k];
            border_core[i] = order[lo..hi].iter().copied().filter(|&j| core[j]).min();
        }
    }
    finish(n, core, &mut uf, &border_core)
}
