//! Generated test maps: a straight road, a four-arm intersection and a grid.
//!
//! Traffic keeps right. Lanes of one direction are numbered from the road
//! centre outwards, so lane `k - 1` is the left neighbour of lane `k`.
//! Intersections get short connector lanes: straight ahead keeps the lane
//! number, left turns use the innermost lanes and right turns the outermost.

use std::collections::BTreeMap;

use super::map_spec::{LaneSpec, MapSpec, MAP_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadLayout {
    pub lanes_per_direction: usize,
    pub lane_width: f64,
    /// Gap between the two innermost opposing lanes' edges.
    pub median: f64,
    pub spacing: f64,
}

impl Default for RoadLayout {
    fn default() -> Self {
        Self {
            lanes_per_direction: 2,
            lane_width: 3.5,
            median: 1.5,
            spacing: 2.0,
        }
    }
}

impl RoadLayout {
    fn offset(&self, k: usize) -> f64 {
        self.median / 2.0 + (k as f64 + 0.5) * self.lane_width
    }

    /// Distance from an intersection centre to where its lanes begin.
    pub fn junction_margin(&self) -> f64 {
        self.median / 2.0 + self.lanes_per_direction as f64 * self.lane_width + 1.0
    }
}

/// One eastbound lane along the x axis from 0 to `length`.
pub fn straight_road(length: f64, spacing: f64) -> MapSpec {
    MapSpec {
        schema_version: MAP_SCHEMA_VERSION,
        lanes: vec![LaneSpec {
            id: "lane0".into(),
            points: vec![[0.0, 0.0], [length, 0.0]],
            width: 3.5,
            spacing,
            left: None,
            right: None,
            successors: vec![],
        }],
    }
}

/// Four arms of length `arm` meeting at the origin.
pub fn intersection(arm: f64, layout: &RoadLayout) -> MapSpec {
    let nodes = vec![[0.0, 0.0], [arm, 0.0], [0.0, arm], [-arm, 0.0], [0.0, -arm]];
    let roads = vec![
        Road::new("east", 0, 1, "out", "in"),
        Road::new("north", 0, 2, "out", "in"),
        Road::new("west", 0, 3, "out", "in"),
        Road::new("south", 0, 4, "out", "in"),
    ];
    build(&nodes, &roads, layout)
}

/// `n × n` intersections spaced `block` metres apart.
///
/// Horizontal roads are `h{i}_{j}` (east lanes `e{k}`, west lanes `w{k}`),
/// vertical roads `v{i}_{j}` (north `n{k}`, south `s{k}`).
pub fn grid(n: usize, block: f64, layout: &RoadLayout) -> MapSpec {
    assert!(n >= 2, "a grid needs at least 2 intersections per side");
    let node = |i: usize, j: usize| i * n + j;
    let mut nodes = vec![[0.0, 0.0]; n * n];
    for i in 0..n {
        for j in 0..n {
            nodes[node(i, j)] = [i as f64 * block, j as f64 * block];
        }
    }
    let mut roads = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n {
                roads.push(Road::new(&format!("h{i}_{j}"), node(i, j), node(i + 1, j), "e", "w"));
            }
            if j + 1 < n {
                roads.push(Road::new(&format!("v{i}_{j}"), node(i, j), node(i, j + 1), "n", "s"));
            }
        }
    }
    build(&nodes, &roads, layout)
}

struct Road {
    name: String,
    a: usize,
    b: usize,
    forward: String,
    backward: String,
}

impl Road {
    fn new(name: &str, a: usize, b: usize, forward: &str, backward: &str) -> Self {
        Self {
            name: name.into(),
            a,
            b,
            forward: forward.into(),
            backward: backward.into(),
        }
    }
}

/// A directed carriageway ending or starting at a node.
struct Carriageway {
    prefix: String,
    dir: [f64; 2],
}

fn build(nodes: &[[f64; 2]], roads: &[Road], layout: &RoadLayout) -> MapSpec {
    let lanes_n = layout.lanes_per_direction;
    let mut degree = vec![0usize; nodes.len()];
    for r in roads {
        degree[r.a] += 1;
        degree[r.b] += 1;
    }
    let margin = |node: usize| if degree[node] >= 2 { layout.junction_margin() } else { 0.0 };

    let mut lanes: Vec<LaneSpec> = Vec::new();
    let mut incoming: BTreeMap<usize, Vec<Carriageway>> = BTreeMap::new();
    let mut outgoing: BTreeMap<usize, Vec<Carriageway>> = BTreeMap::new();
    for r in roads {
        for (from, to, tag) in [(r.a, r.b, &r.forward), (r.b, r.a, &r.backward)] {
            let (p, q) = (nodes[from], nodes[to]);
            let len = (q[0] - p[0]).hypot(q[1] - p[1]);
            let d = [(q[0] - p[0]) / len, (q[1] - p[1]) / len];
            let right = [d[1], -d[0]];
            let prefix = format!("{}_{}", r.name, tag);
            for k in 0..lanes_n {
                let off = layout.offset(k);
                let (m0, m1) = (margin(from), margin(to));
                let start = [p[0] + d[0] * m0 + right[0] * off, p[1] + d[1] * m0 + right[1] * off];
                let end = [q[0] - d[0] * m1 + right[0] * off, q[1] - d[1] * m1 + right[1] * off];
                lanes.push(LaneSpec {
                    id: format!("{prefix}{k}"),
                    points: vec![start, end],
                    width: layout.lane_width,
                    spacing: layout.spacing,
                    left: (k > 0).then(|| format!("{prefix}{}", k - 1)),
                    right: None,
                    successors: vec![],
                });
            }
            outgoing.entry(from).or_default().push(Carriageway { prefix: prefix.clone(), dir: d });
            incoming.entry(to).or_default().push(Carriageway { prefix, dir: d });
        }
    }

    let index: BTreeMap<String, usize> = lanes.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
    let mut connectors = Vec::new();
    for (node, ins) in &incoming {
        let Some(outs) = outgoing.get(node) else { continue };
        for cin in ins {
            for cout in outs {
                let cross = cin.dir[0] * cout.dir[1] - cin.dir[1] * cout.dir[0];
                let dot = cin.dir[0] * cout.dir[0] + cin.dir[1] * cout.dir[1];
                if dot < -0.99 {
                    continue; // no U-turns
                }
                let pairs: Vec<(usize, usize)> = if cross.abs() < 1e-9 {
                    (0..lanes_n).map(|k| (k, k)).collect()
                } else if cross > 0.0 {
                    vec![(0, 0)]
                } else {
                    vec![(lanes_n - 1, lanes_n - 1)]
                };
                for (ki, ko) in pairs {
                    let lin = index[&format!("{}{ki}", cin.prefix)];
                    let lout = index[&format!("{}{ko}", cout.prefix)];
                    let p0 = *lanes[lin].points.last().expect("two points");
                    let p2 = lanes[lout].points[0];
                    let id = format!("{}>{}", lanes[lin].id, lanes[lout].id);
                    connectors.push((lin, lout, id, turn_points(p0, cin.dir, p2, cout.dir)));
                }
            }
        }
    }
    for (lin, lout, id, points) in connectors {
        lanes[lin].successors.push(id.clone());
        let out_id = lanes[lout].id.clone();
        lanes.push(LaneSpec {
            id,
            points,
            width: layout.lane_width,
            spacing: layout.spacing,
            left: None,
            right: None,
            successors: vec![out_id],
        });
    }
    MapSpec {
        schema_version: MAP_SCHEMA_VERSION,
        lanes,
    }
}

/// Polyline from `p0` heading `d0` to `p2` heading `d2`: straight when the
/// headings agree, otherwise a quadratic Bézier through the lines' crossing.
fn turn_points(p0: [f64; 2], d0: [f64; 2], p2: [f64; 2], d2: [f64; 2]) -> Vec<[f64; 2]> {
    let cross = d0[0] * d2[1] - d0[1] * d2[0];
    if cross.abs() < 1e-9 {
        return vec![p0, p2];
    }
    // p0 + t d0 = p2 - s d2
    let w = [p2[0] - p0[0], p2[1] - p0[1]];
    let t = (w[0] * d2[1] - w[1] * d2[0]) / cross;
    let c = [p0[0] + t * d0[0], p0[1] + t * d0[1]];
    (0..=8)
        .map(|i| {
            let u = i as f64 / 8.0;
            let (a, b, e) = ((1.0 - u) * (1.0 - u), 2.0 * u * (1.0 - u), u * u);
            [a * p0[0] + b * c[0] + e * p2[0], a * p0[1] + b * c[1] + e * p2[1]]
        })
        .collect()
}
