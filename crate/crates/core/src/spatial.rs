//! Static k-d tree over small-dimensional points.
//!
//! Every query result is exact and ordered by `(squared distance, id)`, so ties
//! resolve to the lowest id regardless of tree shape. This is what lets the
//! lifting stage agree flag-for-flag with a linear scan.

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub dist2: f64,
}

impl Neighbor {
    #[inline]
    fn key_lt(&self, other: &Neighbor) -> bool {
        self.dist2 < other.dist2 || (self.dist2 == other.dist2 && self.id < other.id)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
pub fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

impl<const D: usize> KdTree<D> {
    /// Builds a tree whose ids are the positions in `points`.
    pub fn new(points: &[[f64; D]]) -> Self {
        Self::with_ids(points.iter().copied().enumerate().map(|(i, p)| (p, i)).collect())
    }

    pub fn with_ids(mut items: Vec<([f64; D], usize)>) -> Self {
        let mut nodes = Vec::new();
        if !items.is_empty() {
            let n = items.len();
            build(&mut items, 0, n, &mut nodes);
        }
        let (points, ids) = items.into_iter().unzip();
        Self { points, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, q: &[f64; D]) -> Option<Neighbor> {
        self.knn(q, 1).into_iter().next()
    }

    /// The `k` nearest points, ascending by `(dist2, id)`.
    pub fn knn(&self, q: &[f64; D], k: usize) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        self.knn_rec(0, q, k, &mut best);
        best
    }

    fn knn_rec(&self, node: usize, q: &[f64; D], k: usize, best: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let cand = Neighbor {
                        id: self.ids[i],
                        dist2: dist2(&self.points[i], q),
                    };
                    if best.len() < k || cand.key_lt(best.last().unwrap()) {
                        let pos = best.partition_point(|b| b.key_lt(&cand));
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                // `<=` keeps equal-distance candidates with lower ids reachable.
                if best.len() < k || diff * diff <= best.last().unwrap().dist2 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    /// Ids of all points with `dist2 <= radius²`, ascending by id.
    pub fn within_radius(&self, q: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: &[f64; D], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    if dist2(&self.points[i], q) <= r2 {
                        out.push(self.ids[i]);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }
}

fn build<const D: usize>(
    items: &mut [([f64; D], usize)],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return idx;
    }
    // split on the axis of widest spread
    let slice = &items[start..end];
    let mut axis = 0;
    let mut widest = f64::NEG_INFINITY;
    for a in 0..D {
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (p, _)| {
            (lo.min(p[a]), hi.max(p[a]))
        });
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    let mid = (end - start) / 2;
    items[start..end].select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    let split = start + mid;
    let value = items[split].0[axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    // Left holds coordinates <= value, right >= value; a query exactly on the
    // plane may need both sides, which the `<=` pruning test above allows.
    let left = build(items, start, split, nodes);
    let right = build(items, split, end, nodes);
    nodes[idx] = Node::Split { axis, value, left, right };
    idx
}
