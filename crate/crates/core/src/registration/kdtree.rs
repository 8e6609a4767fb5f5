use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::{GeometryError, Vec3};

const LEAF_SIZE: usize = 8;

/// Exact nearest-neighbour index over a fixed point set.
///
/// Implicit balanced tree: each subrange's median element is the split node.
/// Ties in distance resolve to the lower point index, matching a linear scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

/// A query result: point index and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::NonFinite("kd-tree point"));
        }
        let mut tree = KdTree { points: points.to_vec(), order: (0..points.len()).collect(), axes: vec![0; points.len()] };
        tree.build(0, points.len());
        Ok(tree)
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let (mut min, mut max) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for &i in &self.order[lo..hi] {
            min = min.inf(&self.points[i]);
            max = max.sup(&self.points[i]);
        }
        let axis = (max - min).imax();
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn nearest(&self, q: &Vec3) -> Neighbor {
        let mut best = Candidate(f64::INFINITY, usize::MAX);
        self.nearest_in(q, 0, self.points.len(), &mut best);
        Neighbor { index: best.1, distance: best.0.sqrt() }
    }

    /// Distance to the nearest point, or `cap` if nothing is closer.
    pub fn nearest_distance_capped(&self, q: &Vec3, cap: f64) -> f64 {
        let mut best = Candidate(cap * cap, usize::MAX);
        self.nearest_in(q, 0, self.points.len(), &mut best);
        if best.1 == usize::MAX {
            cap
        } else {
            best.0.sqrt()
        }
    }

    fn nearest_in(&self, q: &Vec3, lo: usize, hi: usize, best: &mut Candidate) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let c = Candidate((self.points[i] - q).norm_squared(), i);
                if c < *best {
                    *best = c;
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let c = Candidate((self.points[i] - q).norm_squared(), i);
        if c < *best {
            *best = c;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.nearest_in(q, near.0, near.1, best);
        if diff * diff <= best.0 {
            self.nearest_in(q, far.0, far.1, best);
        }
    }

    /// The `k` nearest points, closest first.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(q, k, 0, self.points.len(), &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| Neighbor { index: c.1, distance: c.0.sqrt() }).collect()
    }

    fn knn_in(&self, q: &Vec3, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        let offer = |heap: &mut BinaryHeap<Candidate>, i: usize| {
            let c = Candidate((self.points[i] - q).norm_squared(), i);
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        };
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                offer(heap, i);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        offer(heap, i);
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.knn_in(q, k, near.0, near.1, heap);
        if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
            self.knn_in(q, k, far.0, far.1, heap);
        }
    }

    /// All points within `radius` (inclusive), closest first.
    pub fn radius(&self, q: &Vec3, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.radius_in(q, radius * radius, 0, self.points.len(), &mut out);
        out.sort();
        out.into_iter().map(|c| Neighbor { index: c.1, distance: c.0.sqrt() }).collect()
    }

    fn radius_in(&self, q: &Vec3, r2: f64, lo: usize, hi: usize, out: &mut Vec<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d2 = (self.points[i] - q).norm_squared();
                if d2 <= r2 {
                    out.push(Candidate(d2, i));
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let d2 = (self.points[i] - q).norm_squared();
        if d2 <= r2 {
            out.push(Candidate(d2, i));
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[i][axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_in(q, r2, lo, mid, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_in(q, r2, mid + 1, hi, out);
        }
    }
}
