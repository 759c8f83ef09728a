//! Static 3-D kd-tree for nearest-neighbour and fixed-radius queries.
//!
//! Results are deterministic: neighbours at equal distance are ordered by
//! point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::linalg::Vec3;
use crate::scalar::Real;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node<T> {
    lo: usize,
    hi: usize,
    dim: u8,
    split: T,
    children: Option<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

/// A neighbour and its squared distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour<T> {
    pub index: usize,
    pub dist_sq: T,
}

#[derive(Clone, Copy)]
struct HeapItem<T>(T, usize);

impl<T: Real> PartialEq for HeapItem<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for HeapItem<T> {}
impl<T: Real> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for HeapItem<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0
            .partial_cmp(&o.0)
            .unwrap_or(Ordering::Equal)
            .then(self.1.cmp(&o.1))
    }
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec3<T> {
        self.points[i]
    }

    fn build(&mut self, lo: usize, hi: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            dim: 0,
            split: T::zero(),
            children: None,
        });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        let (mut min, mut max) = (self.points[self.order[lo]], self.points[self.order[lo]]);
        for &i in &self.order[lo..hi] {
            min = min.component_min(self.points[i]);
            max = max.component_max(self.points[i]);
        }
        let ext = max - min;
        let dim = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        if ext[dim] == T::zero() {
            // all points coincide; keep as an oversized leaf
            return id;
        }
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][dim]
                .partial_cmp(&points[b][dim])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let split = self.points[self.order[mid]][dim];
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        let node = &mut self.nodes[id as usize];
        node.dim = dim as u8;
        node.split = split;
        node.children = Some((left, right));
        id
    }

    /// The `k` nearest points to `q`, closest first.
    pub fn knn(&self, q: Vec3<T>, k: usize) -> Vec<Neighbour<T>> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapItem<T>> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        let mut out: Vec<Neighbour<T>> = heap
            .into_iter()
            .map(|HeapItem(d, i)| Neighbour { index: i, dist_sq: d })
            .collect();
        out.sort_by(|a, b| {
            a.dist_sq
                .partial_cmp(&b.dist_sq)
                .unwrap_or(Ordering::Equal)
                .then(a.index.cmp(&b.index))
        });
        out
    }

    fn knn_rec(&self, node: u32, q: Vec3<T>, k: usize, heap: &mut BinaryHeap<HeapItem<T>>) {
        let n = &self.nodes[node as usize];
        match n.children {
            None => {
                for &i in &self.order[n.lo..n.hi] {
                    let item = HeapItem(self.points[i].distance_squared(q), i);
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(item);
                    }
                }
            }
            Some((l, r)) => {
                let diff = q[n.dim as usize] - n.split;
                let (near, far) = if diff < T::zero() { (l, r) } else { (r, l) };
                self.knn_rec(near, q, k, heap);
                let bound = heap.peek().map(|h| h.0);
                if heap.len() < k || bound.is_some_and(|b| diff * diff <= b) {
                    self.knn_rec(far, q, k, heap);
                }
            }
        }
    }

    /// Nearest point to `q`.
    pub fn nearest(&self, q: Vec3<T>) -> Option<Neighbour<T>> {
        self.knn(q, 1).into_iter().next()
    }

    /// Appends to `out` every index whose point lies within `radius` of `q`
    /// (inclusive). Order is tree order; sort if a canonical order is needed.
    pub fn within_into(&self, q: Vec3<T>, radius: T, out: &mut Vec<usize>) {
        if self.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id as usize];
            match n.children {
                None => {
                    for &i in &self.order[n.lo..n.hi] {
                        if self.points[i].distance_squared(q) <= r2 {
                            out.push(i);
                        }
                    }
                }
                Some((l, r)) => {
                    let diff = q[n.dim as usize] - n.split;
                    if diff <= radius {
                        stack.push(l);
                    }
                    if diff >= -radius {
                        stack.push(r);
                    }
                }
            }
        }
    }

    pub fn within(&self, q: Vec3<T>, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_into(q, radius, &mut out);
        out.sort_unstable();
        out
    }

    pub fn count_within(&self, q: Vec3<T>, radius: T) -> usize {
        let mut out = Vec::new();
        self.within_into(q, radius, &mut out);
        out.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vec3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let pts = random_points(700, 3);
        let tree = KdTree::new(&pts);
        let queries = random_points(50, 4);
        for q in queries {
            let got: Vec<usize> = tree.knn(q, 9).iter().map(|n| n.index).collect();
            let mut all: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (p.distance_squared(q), i))
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want: Vec<usize> = all[..9].iter().map(|x| x.1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn radius_matches_brute_force() {
        let pts = random_points(500, 5);
        let tree = KdTree::new(&pts);
        for q in random_points(30, 6) {
            let got = tree.within(q, 0.15);
            let want: Vec<usize> = (0..pts.len())
                .filter(|&i| pts[i].distance_squared(q) <= 0.15 * 0.15)
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn coincident_points_do_not_recurse_forever() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 100];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.count_within(Vec3::new(1.0, 1.0, 1.0), 0.0), 100);
        let nn = tree.knn(Vec3::zero(), 3);
        assert_eq!(nn.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
