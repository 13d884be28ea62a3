//! Exact nearest-neighbor search.
//!
//! The contract is "agrees with an exhaustive linear scan, ties broken by
//! lowest index", so pruning uses strict inequalities and candidate
//! comparison is (distance, index)-lexicographic.

use nalgebra::Point3;

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        len: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a point set. Read-only queries are `&self` and safe
/// to run concurrently.
#[derive(Debug)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    /// Original indices, permuted so leaves are contiguous.
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            order: Vec::new(),
            nodes: Vec::new(),
            root: 0,
        };
        let n = points.len();
        tree.root = tree.build_node(&mut order, 0, n);
        tree.order = order;
        Ok(tree)
    }

    fn build_node(&mut self, order: &mut [u32], start: usize, len: usize) -> usize {
        if len <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, len });
            return self.nodes.len() - 1;
        }
        let slice = &mut order[start..start + len];
        // Split along the axis of largest spread.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in slice.iter() {
            let p = &self.points[i as usize];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = len / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            self.points[a as usize][axis]
                .total_cmp(&self.points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let value = self.points[slice[mid] as usize][axis];
        let node_idx = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, len: 0 }); // placeholder
        let left = self.build_node(order, start, mid);
        let right = self.build_node(order, start + mid, len - mid);
        self.nodes[node_idx] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        node_idx
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest neighbor: (index into the original set, Euclidean distance).
    pub fn nearest(&self, query: &Point3<f64>) -> (usize, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(self.root, query, &mut best);
        (best.0 as usize, best.1.sqrt())
    }

    /// Nearest neighbor within `max_dist`; None when nothing qualifies.
    pub fn nearest_within(&self, query: &Point3<f64>, max_dist: f64) -> Option<(usize, f64)> {
        let (idx, dist) = self.nearest(query);
        (dist <= max_dist).then_some((idx, dist))
    }

    fn search(&self, node: usize, query: &Point3<f64>, best: &mut (u32, f64)) {
        match &self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.order[*start..*start + *len] {
                    let d2 = (self.points[i as usize] - query).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[*axis] - value;
                let (near, far) = if delta < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, best);
                // <= (not <): an equidistant candidate with a lower index
                // may hide exactly on the splitting plane.
                if delta * delta <= best.1 {
                    self.search(far, query, best);
                }
            }
        }
    }

    /// k nearest neighbors, sorted by (distance, index). Returns fewer when
    /// the set is smaller than k.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1); // max-heap by (d2, idx)
        self.knn_search(self.root, query, k, &mut heap);
        let mut out: Vec<(usize, f64)> = heap
            .into_iter()
            .map(|(d2, i)| (i as usize, d2.sqrt()))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn knn_search(&self, node: usize, query: &Point3<f64>, k: usize, heap: &mut Vec<(f64, u32)>) {
        let worst = |heap: &Vec<(f64, u32)>| -> (f64, u32) {
            heap.iter()
                .copied()
                .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap_or((f64::INFINITY, u32::MAX))
        };
        match &self.nodes[node] {
            Node::Leaf { start, len } => {
                for &i in &self.order[*start..*start + *len] {
                    let d2 = (self.points[i as usize] - query).norm_squared();
                    if heap.len() < k {
                        heap.push((d2, i));
                    } else {
                        let w = worst(heap);
                        if d2 < w.0 || (d2 == w.0 && i < w.1) {
                            let pos = heap.iter().position(|&e| e == w).unwrap();
                            heap[pos] = (d2, i);
                        }
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = query[*axis] - value;
                let (near, far) = if delta < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.knn_search(near, query, k, heap);
                if heap.len() < k || delta * delta <= worst(heap).0 {
                    self.knn_search(far, query, k, heap);
                }
            }
        }
    }
}

/// One-shot nearest-neighbor query used where building a tree isn't worth it.
pub fn nearest_neighbor(target: &[Point3<f64>], query: &Point3<f64>) -> Result<(usize, f64)> {
    if target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in target.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    Ok((best.0, best.1.sqrt()))
}
