//! Exact k-nearest-neighbor search over low-dimensional point sets.
//!
//! Median-split kd-tree with lexicographic `(distance, index)` tie-breaking,
//! so the result set is identical to a brute-force scan even under ties.

/// Squared Euclidean distance.
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        indices: Vec<u32>,
    },
    Split {
        dim: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec<f64>>,
    dim: usize,
    root: Node,
}

const LEAF_SIZE: usize = 16;

impl KdTree {
    pub fn build(points: Vec<Vec<f64>>) -> Self {
        assert!(!points.is_empty(), "kd-tree needs at least one point");
        let dim = points[0].len();
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        let root = Self::build_node(&points, &mut indices, dim, 0);
        Self { points, dim, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }

    fn build_node(points: &[Vec<f64>], indices: &mut [u32], dim: usize, depth: usize) -> Node {
        if indices.len() <= LEAF_SIZE {
            return Node::Leaf {
                indices: indices.to_vec(),
            };
        }
        // Split along the axis with the largest spread.
        let mut best_dim = depth % dim;
        let mut best_spread = -1.0;
        for d in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in indices.iter() {
                let v = points[i as usize][d];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = d;
            }
        }
        let mid = indices.len() / 2;
        indices.select_nth_unstable_by(mid, |&a, &b| {
            let va = points[a as usize][best_dim];
            let vb = points[b as usize][best_dim];
            va.partial_cmp(&vb).unwrap().then(a.cmp(&b))
        });
        let split_value = points[indices[mid] as usize][best_dim];
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        let left = Self::build_node(points, left_idx, dim, depth + 1);
        let right = Self::build_node(points, right_idx, dim, depth + 1);
        Node::Split {
            dim: best_dim,
            value: split_value,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// The `k` nearest neighbors of `query` as `(index, squared distance)`,
    /// sorted ascending, optionally excluding one point by index.
    pub fn knn(&self, query: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        assert_eq!(query.len(), self.dim);
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1); // max-heap by (dist, idx)
        self.search(&self.root, query, k, skip, &mut heap);
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|(d, i)| (i as usize, d)).collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    fn search(
        &self,
        node: &Node,
        query: &[f64],
        k: usize,
        skip: Option<usize>,
        heap: &mut Vec<(f64, u32)>,
    ) {
        match node {
            Node::Leaf { indices } => {
                for &i in indices {
                    if skip == Some(i as usize) {
                        continue;
                    }
                    let d = dist_sq(query, &self.points[i as usize]);
                    push_candidate(heap, k, (d, i));
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let delta = query[*dim] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, k, skip, heap);
                // Visit the far side unless the splitting plane is strictly
                // farther than the current worst candidate.
                let plane = delta * delta;
                if heap.len() < k || plane <= heap_max(heap).0 {
                    self.search(far, query, k, skip, heap);
                }
            }
        }
    }
}

fn heap_max(heap: &[(f64, u32)]) -> (f64, u32) {
    heap[0]
}

fn push_candidate(heap: &mut Vec<(f64, u32)>, k: usize, cand: (f64, u32)) {
    let worse = |a: &(f64, u32), b: &(f64, u32)| a.0 > b.0 || (a.0 == b.0 && a.1 > b.1);
    if heap.len() < k {
        heap.push(cand);
        heap_sift_up(heap, worse);
    } else if worse(&heap[0], &cand) {
        heap[0] = cand;
        heap_sift_down(heap, worse);
    }
}

fn heap_sift_up(heap: &mut [(f64, u32)], worse: impl Fn(&(f64, u32), &(f64, u32)) -> bool) {
    let mut i = heap.len() - 1;
    while i > 0 {
        let parent = (i - 1) / 2;
        if worse(&heap[i], &heap[parent]) {
            heap.swap(i, parent);
            i = parent;
        } else {
            break;
        }
    }
}

fn heap_sift_down(heap: &mut [(f64, u32)], worse: impl Fn(&(f64, u32), &(f64, u32)) -> bool) {
    let mut i = 0;
    loop {
        let (l, r) = (2 * i + 1, 2 * i + 2);
        let mut largest = i;
        if l < heap.len() && worse(&heap[l], &heap[largest]) {
            largest = l;
        }
        if r < heap.len() && worse(&heap[r], &heap[largest]) {
            largest = r;
        }
        if largest == i {
            break;
        }
        heap.swap(i, largest);
        i = largest;
    }
}

/// Brute-force k-nearest-neighbor scan with the same tie-breaking; the
/// independent reference the tree is checked against.
pub fn brute_force_knn(
    points: &[Vec<f64>],
    query: &[f64],
    k: usize,
    skip: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| skip != Some(*i))
        .map(|(i, p)| (i, dist_sq(query, p)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
