use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::map_spec::{LaneSpec, MapError, MapSpec};
use crate::geometry::{distance, segments_intersect, Bounds, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Index into [`LaneGraph::lanes`].
    pub lane: usize,
    pub index_in_lane: usize,
}

impl Waypoint {
    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Successor within the same lane.
    InLane,
    LaneChangeLeft,
    LaneChangeRight,
    /// End of a lane to the start of a declared successor lane.
    Junction,
}

impl EdgeKind {
    pub fn is_lane_change(self) -> bool {
        matches!(self, EdgeKind::LaneChangeLeft | EdgeKind::LaneChangeRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneInfo {
    pub id: String,
    pub first: usize,
    pub count: usize,
    pub width: f64,
    pub spacing: f64,
    pub centerline: Vec<[f64; 2]>,
}

impl LaneInfo {
    pub fn waypoint_ids(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.count
    }
}

/// Lane-centre connectivity graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct LaneGraph {
    waypoints: Vec<Waypoint>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    lanes: Vec<LaneInfo>,
    lane_index: BTreeMap<String, usize>,
    bounds: Bounds,
}

/// Builds the graph and checks that it is (weakly) connected.
pub fn build_lane_graph(spec: &MapSpec) -> Result<LaneGraph, MapError> {
    spec.validate()?;
    let neighbors = resolve_neighbors(spec)?;

    let mut waypoints = Vec::new();
    let mut lanes = Vec::with_capacity(spec.lanes.len());
    let mut bounds = Bounds::empty();
    for (li, lane) in spec.lanes.iter().enumerate() {
        let centerline = clean_polyline(lane)?;
        let samples = resample(&centerline, lane.spacing);
        let first = waypoints.len();
        for (k, (p, heading)) in samples.iter().enumerate() {
            waypoints.push(Waypoint {
                x: p[0],
                y: p[1],
                heading: *heading,
                lane: li,
                index_in_lane: k,
            });
        }
        for p in &centerline {
            bounds.include(*p);
        }
        lanes.push(LaneInfo {
            id: lane.id.clone(),
            first,
            count: samples.len(),
            width: lane.width,
            spacing: lane.spacing,
            centerline,
        });
    }
    let lane_index: BTreeMap<String, usize> = lanes.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();

    let mut edges = Vec::new();
    let mut push_edge = |from: usize, to: usize, kind: EdgeKind, wps: &[Waypoint]| {
        let length = distance(wps[from].position(), wps[to].position());
        edges.push(Edge { from, to, kind, length });
    };

    for lane in &lanes {
        for k in 1..lane.count {
            push_edge(lane.first + k - 1, lane.first + k, EdgeKind::InLane, &waypoints);
        }
    }
    for (li, lane) in lanes.iter().enumerate() {
        let (left, right) = neighbors[li];
        for (other, kind) in [(left, EdgeKind::LaneChangeLeft), (right, EdgeKind::LaneChangeRight)] {
            let Some(other) = other else { continue };
            let target = &lanes[other];
            for k in 0..lane.count.saturating_sub(1) {
                let from = lane.first + k;
                let nearest = nearest_in_lane(&waypoints, target, waypoints[from].position());
                let to = nearest + 1;
                if to < target.first + target.count {
                    let reach = distance(waypoints[from].position(), waypoints[to].position());
                    if reach <= 2.0 * (lane.width + target.width) + lane.spacing.max(target.spacing) {
                        push_edge(from, to, kind, &waypoints);
                    }
                }
            }
        }
        for succ in &spec.lanes[li].successors {
            let target = &lanes[lane_index[succ]];
            push_edge(lane.first + lane.count - 1, target.first, EdgeKind::Junction, &waypoints);
        }
    }

    let mut outgoing = vec![Vec::new(); waypoints.len()];
    let mut incoming = vec![Vec::new(); waypoints.len()];
    for (e, edge) in edges.iter().enumerate() {
        outgoing[edge.from].push(e);
        incoming[edge.to].push(e);
    }

    let graph = LaneGraph {
        waypoints,
        edges,
        outgoing,
        incoming,
        lanes,
        lane_index,
        bounds,
    };
    graph.check_connected()?;
    Ok(graph)
}

/// Left/right neighbor lane indices, completing one-sided declarations.
fn resolve_neighbors(spec: &MapSpec) -> Result<Vec<(Option<usize>, Option<usize>)>, MapError> {
    let index: BTreeMap<&str, usize> = spec.lanes.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
    let mut out: Vec<(Option<usize>, Option<usize>)> = spec
        .lanes
        .iter()
        .map(|l| {
            (
                l.left.as_deref().map(|id| index[id]),
                l.right.as_deref().map(|id| index[id]),
            )
        })
        .collect();
    for i in 0..out.len() {
        if let Some(l) = out[i].0 {
            match out[l].1 {
                None => out[l].1 = Some(i),
                Some(r) if r == i => {}
                Some(_) => {
                    return Err(MapError::NeighborConflict {
                        lane: spec.lanes[i].id.clone(),
                        other: spec.lanes[l].id.clone(),
                    })
                }
            }
        }
        if let Some(r) = out[i].1 {
            match out[r].0 {
                None => out[r].0 = Some(i),
                Some(l) if l == i => {}
                Some(_) => {
                    return Err(MapError::NeighborConflict {
                        lane: spec.lanes[i].id.clone(),
                        other: spec.lanes[r].id.clone(),
                    })
                }
            }
        }
        if out[i].0.is_some() && out[i].0 == Some(i) || out[i].1 == Some(i) {
            return Err(MapError::NeighborConflict {
                lane: spec.lanes[i].id.clone(),
                other: spec.lanes[i].id.clone(),
            });
        }
    }
    Ok(out)
}

/// Drops repeated vertices and rejects zero-length or self-crossing centrelines.
fn clean_polyline(lane: &LaneSpec) -> Result<Vec<[f64; 2]>, MapError> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(lane.points.len());
    for p in &lane.points {
        if pts.last().map_or(true, |q| distance(*q, *p) > 1e-9) {
            pts.push(*p);
        }
    }
    if pts.len() < 2 {
        return Err(MapError::ZeroLength(lane.id.clone()));
    }
    let n = pts.len() - 1;
    for i in 0..n {
        for j in (i + 2)..n {
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                return Err(MapError::SelfCrossing(lane.id.clone()));
            }
        }
    }
    // Adjacent segments folding back onto each other also count as crossing.
    for i in 0..n.saturating_sub(1) {
        let a = [pts[i + 1][0] - pts[i][0], pts[i + 1][1] - pts[i][1]];
        let b = [pts[i + 2][0] - pts[i + 1][0], pts[i + 2][1] - pts[i + 1][1]];
        let cross = a[0] * b[1] - a[1] * b[0];
        let dot = a[0] * b[0] + a[1] * b[1];
        if cross.abs() < 1e-12 && dot < 0.0 {
            return Err(MapError::SelfCrossing(lane.id.clone()));
        }
    }
    Ok(pts)
}

/// Samples points every `spacing` metres of arc length, starting at the first
/// vertex. The lane end is included when it falls within 1% of a sample.
fn resample(pts: &[[f64; 2]], spacing: f64) -> Vec<([f64; 2], f64)> {
    let seg_len: Vec<f64> = pts.windows(2).map(|w| distance(w[0], w[1])).collect();
    let total: f64 = seg_len.iter().sum();
    let count = ((total + 0.01 * spacing) / spacing).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..count {
        let s = (k as f64 * spacing).min(total);
        while seg + 1 < seg_len.len() && s >= seg_start + seg_len[seg] {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let t = ((s - seg_start) / seg_len[seg]).clamp(0.0, 1.0);
        let a = pts[seg];
        let b = pts[seg + 1];
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        out.push((p, heading));
    }
    out
}

fn nearest_in_lane(wps: &[Waypoint], lane: &LaneInfo, p: [f64; 2]) -> usize {
    lane.waypoint_ids()
        .min_by(|&a, &b| {
            distance(wps[a].position(), p)
                .total_cmp(&distance(wps[b].position(), p))
                .then(a.cmp(&b))
        })
        .expect("lanes have at least one waypoint")
}

impl LaneGraph {
    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn waypoint(&self, id: usize) -> &Waypoint {
        &self.waypoints[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.outgoing[node].iter().map(move |&e| &self.edges[e])
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.incoming[node].iter().map(move |&e| &self.edges[e])
    }

    /// Previous waypoint in the same lane, if any.
    pub fn predecessor_in_lane(&self, node: usize) -> Option<usize> {
        self.in_edges(node).find(|e| e.kind == EdgeKind::InLane).map(|e| e.from)
    }

    pub fn successor_in_lane(&self, node: usize) -> Option<usize> {
        self.out_edges(node).find(|e| e.kind == EdgeKind::InLane).map(|e| e.to)
    }

    pub fn lanes(&self) -> &[LaneInfo] {
        &self.lanes
    }

    pub fn lane_by_id(&self, id: &str) -> Option<&LaneInfo> {
        self.lane_index.get(id).map(|&i| &self.lanes[i])
    }

    /// Bounding box of all lane centrelines.
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Nearest waypoint within `radius`; ties go to the smaller id. When a
    /// heading is given, waypoints facing within 90° of it are preferred.
    pub fn snap(&self, p: [f64; 2], heading: Option<f64>, radius: f64) -> Option<usize> {
        let pick = |aligned_only: bool| {
            self.waypoints
                .iter()
                .enumerate()
                .filter(|(_, w)| distance(w.position(), p) <= radius)
                .filter(|(_, w)| match (aligned_only, heading) {
                    (true, Some(h)) => (w.heading - h).cos() > 0.0,
                    _ => true,
                })
                .min_by(|(a, wa), (b, wb)| {
                    distance(wa.position(), p)
                        .total_cmp(&distance(wb.position(), p))
                        .then(a.cmp(b))
                })
                .map(|(i, _)| i)
        };
        pick(true).or_else(|| pick(false))
    }

    /// Waypoints reachable from `start` following edge directions.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.waypoints.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(n) = queue.pop_front() {
            for e in self.out_edges(n) {
                if !seen[e.to] {
                    seen[e.to] = true;
                    queue.push_back(e.to);
                }
            }
        }
        seen
    }

    /// Waypoints from which `goal` is reachable following edge directions.
    pub fn reaching(&self, goal: usize) -> Vec<bool> {
        let mut seen = vec![false; self.waypoints.len()];
        let mut queue = VecDeque::from([goal]);
        seen[goal] = true;
        while let Some(n) = queue.pop_front() {
            for e in self.in_edges(n) {
                if !seen[e.from] {
                    seen[e.from] = true;
                    queue.push_back(e.from);
                }
            }
        }
        seen
    }

    /// The strongly connected component containing `node`: every member
    /// can drive to every other.
    pub fn component_of(&self, node: usize) -> Vec<bool> {
        let forward = self.reachable_from(node);
        let backward = self.reaching(node);
        forward.iter().zip(&backward).map(|(a, b)| *a && *b).collect()
    }

    fn check_connected(&self) -> Result<(), MapError> {
        if self.waypoints.is_empty() {
            return Err(MapError::Empty);
        }
        let mut seen = vec![false; self.waypoints.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            let next = self.out_edges(n).map(|e| e.to).chain(self.in_edges(n).map(|e| e.from));
            for m in next.collect::<Vec<_>>() {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(n) => Err(MapError::Disconnected(self.lanes[self.waypoints[n].lane].id.clone())),
            None => Ok(()),
        }
    }
}
