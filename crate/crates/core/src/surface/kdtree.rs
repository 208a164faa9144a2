//! Exact k-nearest-neighbour search over 3D points.
//!
//! Median-split k-d tree with a bounded worst-candidate heap. Ties in
//! distance are broken toward the lower point index, and results are
//! returned sorted ascending by (distance, index), so searches agree with
//! a brute-force scan bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    d2: f64,
    idx: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        // Larger distance is "greater"; equal distances order by index so
        // the heap top is always the candidate to evict first.
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    points: Vec<Vector3<f64>>,
    root: i32,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut idx[..], &mut nodes);
        Self {
            nodes,
            points: points.to_vec(),
            root,
        }
    }

    fn build_rec(points: &[Vector3<f64>], idx: &mut [usize], nodes: &mut Vec<Node>) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        // Split along the axis of largest extent.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in idx.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then_with(|| a.cmp(&b))
        });
        let point = idx[mid];
        let slot = nodes.len();
        nodes.push(Node {
            point,
            axis,
            left: -1,
            right: -1,
        });
        let (left_slice, rest) = idx.split_at_mut(mid);
        let right_slice = &mut rest[1..];
        let left = Self::build_rec(points, left_slice, nodes);
        let right = Self::build_rec(points, right_slice, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        slot as i32
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the k nearest points to `query`, sorted ascending by
    /// (distance, index).
    pub fn knn(&self, query: Vector3<f64>, k: usize) -> Vec<usize> {
        assert!(k <= self.points.len(), "knn: k exceeds point count");
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, query, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_vec();
        out.sort_by(|a, b| a.cmp(b));
        out.into_iter().map(|n| n.idx).collect()
    }

    fn search(&self, node: i32, query: Vector3<f64>, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point];
        let d2 = (p - query).norm_squared();
        let cand = Neighbor { d2, idx: n.point };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }

        let delta = query[n.axis] - p[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, k, heap);
        // Visit the far side unless it provably cannot improve the heap;
        // ties must still be visited so index tie-breaking stays exact.
        let worst = heap.peek().map(|w| w.d2).unwrap_or(f64::INFINITY);
        if heap.len() < k || delta * delta <= worst {
            self.search(far, query, k, heap);
        }
    }
}
