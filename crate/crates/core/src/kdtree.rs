//! Static k-d tree for exact k-nearest-neighbour queries on small point sets.
//!
//! Candidates are ranked by `(squared distance, point index)`, so equal
//! distances resolve to the smaller index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const D: usize> KdTree<D> {
    pub fn build(points: Vec<[f64; D]>) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut tree = Self {
            points,
            nodes: Vec::new(),
            root: None,
        };
        tree.root = tree.build_rec(&mut idx, 0);
        tree
    }

    fn build_rec(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = depth % D;
        let pts = &self.points;
        idx.sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(hi, depth + 1);
        self.nodes.push(KdNode {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest stored points to point `query` (excluding itself),
    /// nearest first.
    pub fn nearest_excluding(&self, query: usize, k: usize) -> Vec<usize> {
        let target = self.points[query];
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(self.root, &target, query, k, &mut heap);
        }
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out.into_iter().map(|c| c.index).collect()
    }

    fn search(
        &self,
        node: Option<usize>,
        target: &[f64; D],
        exclude: usize,
        k: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let p = &self.points[node.point];
        if node.point != exclude {
            let cand = Candidate {
                dist2: dist2(p, target),
                index: node.point,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(cand);
            }
        }
        let diff = target[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, target, exclude, k, heap);
        // equal-distance points on the far side still matter for the tie-break
        let worst = heap.peek().map(|c| c.dist2);
        if heap.len() < k || worst.is_some_and(|w| diff * diff <= w) {
            self.search(far, target, exclude, k, heap);
        }
    }
}

fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
