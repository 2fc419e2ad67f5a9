//! Two-dimensional k-d tree answering "nearest point with index ≥ k" queries.

use super::path::WaypointPath;

#[derive(Debug, Clone)]
struct Node {
    point: [f64; 2],
    index: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
    /// Largest point index stored in this subtree.
    max_index: usize,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl KdTree {
    /// Builds a balanced tree; point `i` keeps index `i`.
    pub fn new(points: &[[f64; 2]]) -> Self {
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build(points, &mut ids, 0, &mut nodes);
        Self { nodes, root }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nearest point among indices `>= min_index`; ties go to the smaller
    /// index. Returns `(index, squared distance)`.
    pub fn nearest_from(&self, query: [f64; 2], min_index: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        if let Some(root) = self.root {
            self.search(root, query, min_index, &mut best);
        }
        best
    }

    fn search(&self, id: usize, q: [f64; 2], min_index: usize, best: &mut Option<(usize, f64)>) {
        let node = &self.nodes[id];
        if node.max_index < min_index {
            return;
        }
        if node.index >= min_index {
            let d2 = sq(node.point, q);
            let better = match *best {
                None => true,
                Some((bi, bd)) => d2 < bd || (d2 == bd && node.index < bi),
            };
            if better {
                *best = Some((node.index, d2));
            }
        }
        let diff = q[node.axis] - node.point[node.axis];
        let (near, far) = if diff <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, q, min_index, best);
        }
        if let Some(f) = far {
            // Equal distance can still hide a smaller index, so prune strictly.
            if best.map_or(true, |(_, bd)| diff * diff <= bd) {
                self.search(f, q, min_index, best);
            }
        }
    }
}

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn build(points: &[[f64; 2]], ids: &mut [usize], depth: usize, nodes: &mut Vec<Node>) -> Option<usize> {
    if ids.is_empty() {
        return None;
    }
    let axis = depth % 2;
    ids.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let mid = ids.len() / 2;
    let index = ids[mid];
    let slot = nodes.len();
    nodes.push(Node {
        point: points[index],
        index,
        axis,
        left: None,
        right: None,
        max_index: index,
    });
    let (lo, rest) = ids.split_at_mut(mid);
    let left = build(points, lo, depth + 1, nodes);
    let right = build(points, &mut rest[1..], depth + 1, nodes);
    let mut max_index = index;
    for c in [left, right].into_iter().flatten() {
        max_index = max_index.max(nodes[c].max_index);
    }
    let node = &mut nodes[slot];
    node.left = left;
    node.right = right;
    node.max_index = max_index;
    Some(slot)
}

/// Nearest-waypoint lookup over a path with a forward-only progress cursor.
#[derive(Debug, Clone)]
pub struct PathIndex {
    tree: KdTree,
    cursor: usize,
}

impl PathIndex {
    pub fn new(path: &WaypointPath) -> Self {
        Self::from_points(&path.positions())
    }

    pub fn from_points(points: &[[f64; 2]]) -> Self {
        assert!(!points.is_empty(), "path index needs at least one point");
        Self {
            tree: KdTree::new(points),
            cursor: 0,
        }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

/// Nearest waypoint at or after the cursor; the cursor moves to the result.
pub fn nearest_waypoint(index: &mut PathIndex, position: [f64; 2]) -> usize {
    let (i, _) = index
        .tree
        .nearest_from(position, index.cursor)
        .expect("cursor never passes the last waypoint");
    index.cursor = i;
    i
}
