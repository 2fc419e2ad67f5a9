#![allow(dead_code)]

use std::collections::BTreeMap;

use amod_core::dynamics::VehicleState;
use amod_core::fleet::VehicleId;
use amod_core::geometry::{distance, Pose};
use amod_core::planner::{
    build_groups_threshold, initial_controls, plan_all, reference_states, AdmmReport, MemberInput, PlannerParams,
};
use amod_core::road::synthetic::{self, RoadLayout};
use amod_core::road::{astar_route, build_lane_graph, PathIndex, RouteOptions, WaypointPath};

pub struct CrossingRun {
    pub min_distance: f64,
    pub reports: Vec<AdmmReport>,
}

/// Eastbound and northbound vehicles on the inner lanes of a four-arm
/// intersection, both at 10 m/s. The northbound one starts `offset` metres
/// further from the conflict point.
pub fn crossing_setup(offset: f64) -> Vec<(VehicleState, WaypointPath)> {
    let layout = RoadLayout::default();
    let graph = build_lane_graph(&synthetic::intersection(60.0, &layout)).unwrap();
    let lane = layout.median / 2.0 + 0.5 * layout.lane_width;
    let opts = RouteOptions::default();
    let east = VehicleState::new(-50.0, -lane, 0.0, 10.0);
    let north = VehicleState::new(lane, -lane - 50.0 - offset, std::f64::consts::FRAC_PI_2, 10.0);
    let east_path = astar_route(&graph, Pose::new(east.x, east.y, 0.0), Pose::new(55.0, -lane, 0.0), &opts).unwrap();
    let north_path = astar_route(
        &graph,
        Pose::new(north.x, north.y, north.heading),
        Pose::new(lane, 55.0, north.heading),
        &opts,
    )
    .unwrap();
    vec![(east, east_path), (north, north_path)]
}

/// Receding-horizon run: plan, execute `params.execute` steps, repeat.
/// Returns the smallest centre distance seen at any executed step.
pub fn crossing_run(params: &PlannerParams, offset: f64, cycles: usize) -> CrossingRun {
    let setup = crossing_setup(offset);
    let arcs: Vec<Vec<f64>> = setup.iter().map(|(_, p)| p.arc_lengths()).collect();
    let mut indices: Vec<PathIndex> = setup.iter().map(|(_, p)| PathIndex::new(p)).collect();
    let mut states: BTreeMap<VehicleId, VehicleState> =
        setup.iter().enumerate().map(|(i, (z, _))| (VehicleId(i as u32), *z)).collect();
    let mut min_distance = f64::INFINITY;
    let mut reports = Vec::new();
    for _ in 0..cycles {
        let groups = build_groups_threshold(&states, params.r_tele);
        let mut inputs = BTreeMap::new();
        for (k, (id, z)) in states.iter().enumerate() {
            let reference = reference_states(&setup[k].1, &arcs[k], &mut indices[k], z, params);
            let controls = initial_controls(z, &reference, params);
            inputs.insert(*id, MemberInput { z0: *z, reference, controls });
        }
        let out = plan_all(&groups, &inputs, &BTreeMap::new(), params, 1).unwrap();
        reports.extend(out.reports.into_iter().map(|(_, r)| r));
        for step in 1..=params.execute {
            for (id, z) in states.iter_mut() {
                *z = out.trajectories[id].states[step];
            }
            let p: Vec<[f64; 2]> = states.values().map(|s| s.position()).collect();
            min_distance = min_distance.min(distance(p[0], p[1]));
        }
    }
    CrossingRun { min_distance, reports }
}

// ---- dispatch oracles -------------------------------------------------

use amod_core::fleet::{FleetSnapshot, PassengerRequest, RequestId, VehicleRecord};
use rand::Rng;

/// Up to 5 vehicles and 5 requests on a coarse integer grid, so distance
/// ties happen. Some vehicles are busy and some requests already taken.
pub fn random_snapshot<R: Rng>(rng: &mut R) -> FleetSnapshot {
    let mut s = FleetSnapshot { sim_time: rng.gen_range(0.0..120.0f64).round(), ..Default::default() };
    let nv = rng.gen_range(0..=5u32);
    let nr = rng.gen_range(0..=5u32);
    for i in 0..nv {
        let id = VehicleId(rng.gen_range(0..3) + 3 * i);
        let mut rec = VehicleRecord::idle(id, rng.gen_range(0..4) as f64 * 10.0);
        if rng.gen_bool(0.2) {
            rec.free = false;
        }
        s.vehicles.insert(id, rec);
        let p = [rng.gen_range(-4..=4) as f64 * 5.0, rng.gen_range(-4..=4) as f64 * 5.0];
        s.states.insert(id, VehicleState::new(p[0], p[1], 0.0, 0.0));
    }
    for i in 0..nr {
        let id = RequestId(rng.gen_range(0..3) + 3 * i);
        let p = [rng.gen_range(-4..=4) as f64 * 5.0, rng.gen_range(-4..=4) as f64 * 5.0];
        let spawn = (s.sim_time - rng.gen_range(0..8) as f64 * 10.0).max(0.0);
        let mut req = PassengerRequest::new(id, p, [0.0, 0.0], spawn);
        if rng.gen_bool(0.15) {
            req.assigned = true;
            req.vehicle = Some(VehicleId(999));
        }
        s.requests.insert(id, req);
    }
    s
}

fn free(s: &FleetSnapshot) -> Vec<VehicleId> {
    s.vehicles.values().filter(|v| v.free).map(|v| v.id).collect()
}

fn pending(s: &FleetSnapshot) -> Vec<RequestId> {
    s.requests.values().filter(|r| r.vehicle.is_none()).map(|r| r.id).collect()
}

fn dist(s: &FleetSnapshot, v: VehicleId, r: RequestId) -> f64 {
    let z = s.states[&v];
    let p = s.requests[&r].pickup;
    ((z.x - p[0]).powi(2) + (z.y - p[1]).powi(2)).sqrt()
}

/// Sorts every candidate pair by (distance, vehicle, request) once and
/// keeps each pair whose vehicle and request are both still unused.
pub fn oracle_distance_first(s: &FleetSnapshot, vs: &[VehicleId], rs: &[RequestId]) -> Vec<(VehicleId, RequestId)> {
    let mut all: Vec<(f64, VehicleId, RequestId)> =
        vs.iter().flat_map(|v| rs.iter().map(move |r| (*v, *r))).map(|(v, r)| (dist(s, v, r), v, r)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_v = std::collections::BTreeSet::new();
    let mut used_r = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (_, v, r) in all {
        if !used_v.contains(&v) && !used_r.contains(&r) {
            used_v.insert(v);
            used_r.insert(r);
            out.push((v, r));
        }
    }
    out
}

pub fn oracle_rule(rule: &str, s: &FleetSnapshot, t_max: f64) -> Vec<(VehicleId, RequestId)> {
    let mut vs = free(s);
    let mut rs = pending(s);
    match rule {
        "distance_first" => oracle_distance_first(s, &vs, &rs),
        "idle_first" => {
            let mut order: Vec<(f64, VehicleId)> = vs.iter().map(|v| (s.vehicles[v].idle_since, *v)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut out = Vec::new();
            for (_, v) in order {
                let best = rs.iter().map(|r| (dist(s, v, *r), *r)).min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if let Some((_, r)) = best {
                    rs.retain(|x| *x != r);
                    out.push((v, r));
                }
            }
            out
        }
        "fcfs" | "mixed_first" => {
            let mut order: Vec<(f64, RequestId)> = rs
                .iter()
                .filter(|r| rule == "fcfs" || s.sim_time - s.requests[r].spawn_time > t_max)
                .map(|r| (s.requests[r].spawn_time, *r))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut out = Vec::new();
            for (_, r) in order {
                let best = vs.iter().map(|v| (dist(s, *v, r), *v)).min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if let Some((_, v)) = best {
                    vs.retain(|x| *x != v);
                    rs.retain(|x| *x != r);
                    out.push((v, r));
                }
            }
            if rule == "mixed_first" {
                out.extend(oracle_distance_first(s, &vs, &rs));
            }
            out
        }
        other => panic!("unknown rule {other}"),
    }
}

// ---- solver and routing oracles ---------------------------------------

use amod_core::dynamics::ControlInput;
use amod_core::planner::{build_local_problem, LocalProblem};
use amod_core::road::{edge_cost, LaneGraph};
use nalgebra::{DMatrix, DVector};
use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};
use rand_chacha::ChaCha8Rng;

/// Dense solve of
/// `min ½xᵀHx + gᵀx + γ‖Jx + r‖²  s.t.  Ex = 0`
/// through the full KKT system.
pub fn dense_oracle(problem: &LocalProblem, r: &[f64], gamma: f64) -> DVector<f64> {
    let n = problem.dim();
    let j = problem.rows_dense();
    let e = problem.dynamics_dense();
    let m = e.nrows();
    let rv = DVector::from_column_slice(r);
    let h = problem.hessian_dense() + 2.0 * gamma * j.transpose() * &j;
    let g = problem.gradient_dense() + 2.0 * gamma * j.transpose() * rv;
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&h);
    kkt.view_mut((0, n), (n, m)).copy_from(&e.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&e);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    let sol = kkt.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    sol.rows(0, n).into_owned()
}

pub fn random_instance(rng: &mut ChaCha8Rng, params: &PlannerParams) -> (LocalProblem, Vec<f64>, usize) {
    let t = params.horizon;
    let z0 = VehicleState::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.5..12.0));
    let reference: Vec<VehicleState> = (0..=t)
        .map(|k| VehicleState::new(z0.x + k as f64 * rng.gen_range(0.0..1.5), z0.y + rng.gen_range(-1.0..1.0), z0.heading + rng.gen_range(-0.3..0.3), rng.gen_range(0.0..12.0)))
        .collect();
    let controls: Vec<ControlInput> = (0..t)
        .map(|_| ControlInput::new(rng.gen_range(-2.0..2.0), rng.gen_range(-0.3..0.3)))
        .collect();
    let n_neighbors = rng.gen_range(0..3usize);
    let neighbors: Vec<(VehicleId, Vec<VehicleState>)> = (0..n_neighbors)
        .map(|i| {
            let traj = (0..=t)
                .map(|_| VehicleState::new(z0.x + rng.gen_range(-8.0..8.0), z0.y + rng.gen_range(-8.0..8.0), 0.0, 5.0))
                .collect();
            (VehicleId(10 + i as u32), traj)
        })
        .collect();
    let problem = build_local_problem(VehicleId(0), &z0, &reference, &controls, &neighbors, params).unwrap();
    let r: Vec<f64> = (0..problem.n_rows()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (problem, r, n_neighbors)
}

pub fn dijkstra_cost(graph: &LaneGraph, from: usize, to: usize, opts: &RouteOptions) -> Option<f64> {
    let mut g: DiGraph<(), f64> = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..graph.len()).map(|_| g.add_node(())).collect();
    for e in graph.edges() {
        g.add_edge(nodes[e.from], nodes[e.to], edge_cost(e, opts));
    }
    dijkstra(&g, nodes[from], Some(nodes[to]), |e| *e.weight())
        .get(&nodes[to])
        .copied()
}

