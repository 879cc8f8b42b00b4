//! Static k-d tree over a point slice.
//!
//! Every query breaks distance ties by the lower point index, so results do
//! not depend on the internal layout of the tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::Point3;

const LEAF_SIZE: usize = 8;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    start: u32,
    end: u32,
    axis: u8,
    split: f64,
    left: u32,
    right: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.left == NO_CHILD
    }
}

/// A neighbour returned by a query: index into the indexed slice and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist2.sqrt()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

// Max-heap ordering for the k-best set.
impl Eq for Neighbor {}
impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    perm: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            perm: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
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

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            start: start as u32,
            end: end as u32,
            axis: 0,
            split: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }

        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.perm[start..end] {
            let p = &self.points[i as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[axis] - lo[axis] == 0.0 {
            // All points coincide; nothing to split on.
            return id;
        }

        let mid = (start + end) / 2;
        let points = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let split = self.points[self.perm[mid] as usize][axis];

        let left = self.build(start, mid);
        let right = self.build(mid, end);
        let node = &mut self.nodes[id as usize];
        node.axis = axis as u8;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    /// Nearest indexed point to `query`, or `None` for an empty tree.
    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Neighbor {
            index: usize::MAX,
            dist2: f64::INFINITY,
        };
        self.nearest_rec(0, query, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, node_id: u32, query: &Point3, best: &mut Neighbor) {
        let node = &self.nodes[node_id as usize];
        if node.is_leaf() {
            for &i in &self.perm[node.start as usize..node.end as usize] {
                let cand = Neighbor {
                    index: i as usize,
                    dist2: (self.points[i as usize] - query).norm_squared(),
                };
                if cand.key_cmp(best) == Ordering::Less {
                    *best = cand;
                }
            }
            return;
        }
        let diff = query[node.axis as usize] - node.split;
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.nearest_rec(near, query, best);
        if diff * diff <= best.dist2 {
            self.nearest_rec(far, query, best);
        }
    }

    /// The `k` nearest points ordered by (distance, index).
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out = heap.into_vec();
        out.sort_by(Neighbor::key_cmp);
        out
    }

    fn knn_rec(&self, node_id: u32, query: &Point3, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        let node = &self.nodes[node_id as usize];
        if node.is_leaf() {
            for &i in &self.perm[node.start as usize..node.end as usize] {
                let cand = Neighbor {
                    index: i as usize,
                    dist2: (self.points[i as usize] - query).norm_squared(),
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if let Some(worst) = heap.peek() {
                    if cand.key_cmp(worst) == Ordering::Less {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            return;
        }
        let diff = query[node.axis as usize] - node.split;
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.knn_rec(near, query, k, heap);
        let bound = if heap.len() < k {
            f64::INFINITY
        } else {
            heap.peek().map_or(f64::INFINITY, |w| w.dist2)
        };
        if diff * diff <= bound {
            self.knn_rec(far, query, k, heap);
        }
    }

    /// Indices of points inside the half-open box `[min, max)`, ascending.
    pub fn within_box(&self, min: &Point3, max: &Point3) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.box_rec(0, min, max, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Number of points inside the half-open box `[min, max)`.
    pub fn count_in_box(&self, min: &Point3, max: &Point3) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut count = 0;
        self.count_rec(0, min, max, &mut count);
        count
    }

    fn box_rec(&self, node_id: u32, min: &Point3, max: &Point3, out: &mut Vec<usize>) {
        let node = &self.nodes[node_id as usize];
        if node.is_leaf() {
            for &i in &self.perm[node.start as usize..node.end as usize] {
                if in_half_open_box(&self.points[i as usize], min, max) {
                    out.push(i as usize);
                }
            }
            return;
        }
        let a = node.axis as usize;
        if min[a] <= node.split {
            self.box_rec(node.left, min, max, out);
        }
        if node.split < max[a] {
            self.box_rec(node.right, min, max, out);
        }
    }

    fn count_rec(&self, node_id: u32, min: &Point3, max: &Point3, count: &mut usize) {
        let node = &self.nodes[node_id as usize];
        if node.is_leaf() {
            *count += self.perm[node.start as usize..node.end as usize]
                .iter()
                .filter(|&&i| in_half_open_box(&self.points[i as usize], min, max))
                .count();
            return;
        }
        let a = node.axis as usize;
        if min[a] <= node.split {
            self.count_rec(node.left, min, max, count);
        }
        if node.split < max[a] {
            self.count_rec(node.right, min, max, count);
        }
    }
}

#[inline]
pub(crate) fn in_half_open_box(p: &Point3, min: &Point3, max: &Point3) -> bool {
    (0..3).all(|a| p[a] >= min[a] && p[a] < max[a])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let pts = random_points(300, 1);
        let tree = KdTree::new(&pts);
        for q in random_points(50, 2) {
            let got = tree.nearest(&q).unwrap();
            let want = pts
                .iter()
                .enumerate()
                .map(|(i, p)| ((p - q).norm_squared(), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap();
            assert_eq!(got.index, want.1);
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Four points equidistant from the origin.
        let pts: Vec<Point3> = (0..20)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Point3::new(s, 0.0, 0.0)
            })
            .collect();
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Point3::origin()).unwrap().index, 0);
        let k: Vec<usize> = tree.knn(&Point3::origin(), 3).iter().map(|n| n.index).collect();
        assert_eq!(k, vec![0, 1, 2]);
    }

    #[test]
    fn box_query_matches_scan() {
        let pts = random_points(400, 3);
        let tree = KdTree::new(&pts);
        let min = Point3::new(0.2, 0.1, 0.3);
        let max = Point3::new(0.7, 0.5, 0.9);
        let want: Vec<usize> = (0..pts.len())
            .filter(|&i| in_half_open_box(&pts[i], &min, &max))
            .collect();
        assert_eq!(tree.within_box(&min, &max), want);
        assert_eq!(tree.count_in_box(&min, &max), want.len());
    }

    #[test]
    fn coincident_points_do_not_recurse_forever() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.knn(&Point3::origin(), 40).len(), 40);
    }
}
