use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::graph::{Edge, LaneGraph};
use super::path::WaypointPath;
use crate::geometry::{distance, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteOptions {
    /// Extra cost charged per lane-change edge, in metres.
    pub lane_change_penalty: f64,
    pub snap_radius: f64,
}

impl Default for RouteOptions {
    fn default() -> Self {
        Self {
            lane_change_penalty: 5.0,
            snap_radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoRouteReason {
    Start,
    Goal,
    Disconnected,
    /// Start and goal are the same point.
    Degenerate,
}

impl std::fmt::Display for NoRouteReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoRouteReason::Start => "start",
            NoRouteReason::Goal => "goal",
            NoRouteReason::Disconnected => "disconnected",
            NoRouteReason::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no route ({0})")]
pub struct NoRoute(pub NoRouteReason);

/// Traversal cost of one edge.
pub fn edge_cost(edge: &Edge, opts: &RouteOptions) -> f64 {
    if edge.kind.is_lane_change() {
        edge.length + opts.lane_change_penalty
    } else {
        edge.length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRoute {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over waypoint ids with a straight-line heuristic.
pub fn astar_nodes(graph: &LaneGraph, from: usize, to: usize, opts: &RouteOptions) -> Option<NodeRoute> {
    let goal = graph.waypoint(to).position();
    let h = |n: usize| distance(graph.waypoint(n).position(), goal);
    let mut g = vec![f64::INFINITY; graph.len()];
    let mut parent = vec![usize::MAX; graph.len()];
    let mut open = BinaryHeap::new();
    g[from] = 0.0;
    open.push(Open { f: h(from), g: 0.0, node: from });
    while let Some(Open { g: gn, node, .. }) = open.pop() {
        if gn > g[node] {
            continue;
        }
        if node == to {
            let mut nodes = vec![to];
            let mut cur = to;
            while cur != from {
                cur = parent[cur];
                nodes.push(cur);
            }
            nodes.reverse();
            return Some(NodeRoute { nodes, cost: gn });
        }
        // Nodes may be reopened, so rounding in the heuristic cannot cost optimality.
        for e in graph.out_edges(node) {
            let cand = gn + edge_cost(e, opts);
            if cand < g[e.to] {
                g[e.to] = cand;
                parent[e.to] = node;
                open.push(Open {
                    f: cand + h(e.to),
                    g: cand,
                    node: e.to,
                });
            }
        }
    }
    None
}

/// Shortest route between two poses, as start pose, graph waypoints, goal pose.
pub fn astar_route(graph: &LaneGraph, start: Pose, goal: Pose, opts: &RouteOptions) -> Result<WaypointPath, NoRoute> {
    if start.distance_to(&goal) <= 1e-9 {
        return Err(NoRoute(NoRouteReason::Degenerate));
    }
    let s = graph
        .snap(start.position(), Some(start.heading), opts.snap_radius)
        .ok_or(NoRoute(NoRouteReason::Start))?;
    let t = graph
        .snap(goal.position(), None, opts.snap_radius)
        .ok_or(NoRoute(NoRouteReason::Goal))?;
    let route = astar_nodes(graph, s, t, opts).ok_or(NoRoute(NoRouteReason::Disconnected))?;

    let mut wps: Vec<Pose> = route.nodes.iter().map(|&n| graph.waypoint(n).pose()).collect();
    // Waypoints the vehicle has already passed, or that overshoot the goal.
    if wps.len() >= 2 && along(&wps[1], &wps[0], start.position()) < 0.0 {
        wps.remove(0);
    }
    if wps.len() >= 2 {
        let n = wps.len();
        if along(&wps[n - 2], &wps[n - 1], goal.position()) < 0.0 {
            wps.pop();
        }
    }

    let mut poses = Vec::with_capacity(wps.len() + 2);
    poses.push(start);
    for p in wps.into_iter().chain(std::iter::once(goal)) {
        let last = poses.last().expect("non-empty");
        if distance(last.position(), p.position()) > 1e-9 {
            poses.push(p);
        }
    }
    // A goal pose that coincides with the final waypoint replaces it.
    if let Some(last) = poses.last_mut() {
        if distance(last.position(), goal.position()) <= 1e-9 {
            *last = goal;
        }
    }
    Ok(WaypointPath::new(poses).expect("route poses are distinct"))
}

/// Signed position of `p` along segment `a -> b`, measured from `b`.
fn along(a: &Pose, b: &Pose, p: [f64; 2]) -> f64 {
    let d = [b.x - a.x, b.y - a.y];
    (p[0] - b.x) * d[0] + (p[1] - b.y) * d[1]
}
