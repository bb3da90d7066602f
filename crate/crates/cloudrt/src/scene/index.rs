//! Spatial index over point positions.
//!
//! A balanced k-d tree with axis-aligned bounding boxes per node. Every query
//! applies the exact geometric predicate to each surviving candidate, so the
//! results are precisely the points a linear scan would return; the tree only
//! prunes. Result index lists are ascending, independent of traversal order.

use crate::geom::{point_segment_distance_sq, P3};
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 24;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: [f64::INFINITY; 3], hi: [f64::NEG_INFINITY; 3] }
    }

    fn insert(&mut self, p: &[f64; 3]) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    /// Squared distance from a point to the box, zero inside.
    fn distance_sq(&self, p: &[f64; 3]) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.lo[a] {
                self.lo[a] - p[a]
            } else if p[a] > self.hi[a] {
                p[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Whether the segment `a..b` passes within `r` of the box. Conservative:
    /// tests the segment against the box inflated by `r`, which never rejects
    /// a box actually within reach.
    fn segment_within(&self, a: &[f64; 3], b: &[f64; 3], r: f64) -> bool {
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for axis in 0..3 {
            let lo = self.lo[axis] - r;
            let hi = self.hi[axis] + r;
            let d = b[axis] - a[axis];
            if d == 0.0 {
                if a[axis] < lo || a[axis] > hi {
                    return false;
                }
                continue;
            }
            let mut ta = (lo - a[axis]) / d;
            let mut tb = (hi - a[axis]) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: u32, end: u32 },
    Split { left: u32, right: u32 },
}

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    kind: NodeKind,
}

/// Immutable k-d tree over 3-d points.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    coords: Vec<[f64; 3]>,
    /// Point indices permuted into tree order; leaves own contiguous ranges.
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: Option<u32>,
}

impl SpatialIndex {
    pub fn build(points: impl IntoIterator<Item = P3>) -> Self {
        let coords: Vec<[f64; 3]> = points.into_iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..coords.len() as u32).collect();
        let mut nodes = Vec::new();
        let root = if coords.is_empty() {
            None
        } else {
            let n = coords.len();
            Some(build_node(&coords, &mut order, 0, n, &mut nodes))
        };
        SpatialIndex { coords, order, nodes, root }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Indices of all points with |p - center| <= radius, ascending.
    pub fn within_radius(&self, center: &P3, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        if let Some(root) = self.root {
            let c = [center.x, center.y, center.z];
            let r_sq = radius * radius;
            let mut stack = vec![root];
            while let Some(ni) = stack.pop() {
                let node = &self.nodes[ni as usize];
                if node.bbox.distance_sq(&c) > r_sq {
                    continue;
                }
                match node.kind {
                    NodeKind::Leaf { start, end } => {
                        for &pi in &self.order[start as usize..end as usize] {
                            let p = &self.coords[pi as usize];
                            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                            if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r_sq {
                                out.push(pi);
                            }
                        }
                    }
                    NodeKind::Split { left, right } => {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Indices of the k nearest points, ordered by distance and, among ties,
    /// by index.
    pub fn k_nearest(&self, center: &P3, k: usize) -> Vec<u32> {
        let Some(root) = self.root else { return Vec::new() };
        if k == 0 {
            return Vec::new();
        }
        let c = [center.x, center.y, center.z];
        // Max-heap of the best k candidates seen so far.
        let mut heap: BinaryHeap<(OrderedDist, u32)> = BinaryHeap::new();
        let mut stack = vec![root];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if heap.len() == k {
                let worst = heap.peek().unwrap().0 .0;
                if node.bbox.distance_sq(&c) > worst {
                    continue;
                }
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &pi in &self.order[start as usize..end as usize] {
                        let p = &self.coords[pi as usize];
                        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                        let dist_sq = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                        let cand = (OrderedDist(dist_sq), pi);
                        if heap.len() < k {
                            heap.push(cand);
                        } else if cand < *heap.peek().unwrap() {
                            heap.pop();
                            heap.push(cand);
                        }
                    }
                }
                NodeKind::Split { left, right } => {
                    // Visit the closer child first so the heap tightens early.
                    let dl = self.nodes[left as usize].bbox.distance_sq(&c);
                    let dr = self.nodes[right as usize].bbox.distance_sq(&c);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        let mut out: Vec<(OrderedDist, u32)> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|(_, i)| i).collect()
    }

    /// Indices of all points within distance `radius` of the segment `a..b`,
    /// ascending.
    pub fn near_segment(&self, a: &P3, b: &P3, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        if let Some(root) = self.root {
            let sa = [a.x, a.y, a.z];
            let sb = [b.x, b.y, b.z];
            let r_sq = radius * radius;
            let mut stack = vec![root];
            while let Some(ni) = stack.pop() {
                let node = &self.nodes[ni as usize];
                if !node.bbox.segment_within(&sa, &sb, radius) {
                    continue;
                }
                match node.kind {
                    NodeKind::Leaf { start, end } => {
                        for &pi in &self.order[start as usize..end as usize] {
                            let p = P3::new(
                                self.coords[pi as usize][0],
                                self.coords[pi as usize][1],
                                self.coords[pi as usize][2],
                            );
                            if point_segment_distance_sq(&p, a, b) <= r_sq {
                                out.push(pi);
                            }
                        }
                    }
                    NodeKind::Split { left, right } => {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Total order on squared distances; the values are finite by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedDist(f64);

impl Eq for OrderedDist {}

impl PartialOrd for OrderedDist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedDist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn build_node(
    coords: &[[f64; 3]],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut bbox = Aabb::empty();
    for &pi in &order[start..end] {
        bbox.insert(&coords[pi as usize]);
    }
    let count = end - start;
    if count <= LEAF_SIZE {
        // Ascending order inside leaves keeps results reproducible.
        order[start..end].sort_unstable();
        nodes.push(Node { bbox, kind: NodeKind::Leaf { start: start as u32, end: end as u32 } });
        return (nodes.len() - 1) as u32;
    }
    let mut axis = 0;
    let mut widest = f64::NEG_INFINITY;
    for a in 0..3 {
        let w = bbox.hi[a] - bbox.lo[a];
        if w > widest {
            widest = w;
            axis = a;
        }
    }
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
        coords[i as usize][axis]
            .total_cmp(&coords[j as usize][axis])
            .then(i.cmp(&j))
    });
    let placeholder = nodes.len() as u32;
    nodes.push(Node { bbox, kind: NodeKind::Leaf { start: 0, end: 0 } });
    let left = build_node(coords, order, start, mid, nodes);
    let right = build_node(coords, order, mid, end, nodes);
    nodes[placeholder as usize].kind = NodeKind::Split { left, right };
    placeholder
}
