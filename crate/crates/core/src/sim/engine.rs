//! The closed loop: release, dispatch, route, group, plan, execute.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{compute_rates, compute_task_times, distance_penalty, Frame, MetricsReport};
use super::scenario::{Scenario, ScenarioError};
use super::{ConfigError, DispatcherChoice, GroupingChoice, SimConfig};
use crate::bev::{render_bev, BevStyle, MessageSettings, RgbImage};
use crate::dispatch::chat::ChatClient;
use crate::dispatch::embed::HashEmbedder;
use crate::dispatch::memory::MemoryContainer;
use crate::dispatch::model::{ModelDispatcher, ModelParams};
use crate::dynamics::{step, ControlInput, KinematicParams, VehicleState};
use crate::fleet::{
    advance_stage, apply_assignment, trigger_dispatch, EventKind, EventLog, FleetError, FleetSnapshot, PassengerRequest,
    RequestId, Stage, StageEvent, VehicleId, VehicleRecord,
};
use crate::geometry::{angle_diff, distance, Pose};
use crate::planner::{
    build_groups_threshold, build_groups_via_model, initial_controls, plan_all, reference_states, MemberInput,
    PlanError, PlannerParams,
};
use crate::road::{
    astar_route, densify_path, nearest_waypoint, smooth_path, LaneGraph, PathIndex, RouteOptions, WaypointPath,
};

/// Speed below which a vehicle at the end of its path counts as stopped, m/s.
const STALL_SPEED: f64 = 0.1;

/// Chat backends for the model dispatcher and model grouping.
pub struct ModelClients {
    pub dispatch: Option<Box<dyn ChatClient>>,
    pub grouping: Option<Box<dyn ChatClient>>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error("{0} needs a model client")]
    MissingClient(&'static str),
}

/// Executed states and the controls between them; `states[k + 1]` follows
/// from `states[k]` under `controls[k]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleTrace {
    pub times: Vec<f64>,
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
}

/// Largest deviation between the logged states and re-stepping the logged
/// controls through the model from each logged state.
pub fn replay_error(trace: &VehicleTrace, kinematics: &KinematicParams) -> f64 {
    trace
        .controls
        .iter()
        .enumerate()
        .map(|(k, u)| match step(&trace.states[k], u, kinematics) {
            Ok(z) => {
                let next = &trace.states[k + 1];
                [z.x - next.x, z.y - next.y, angle_diff(z.heading, next.heading), z.v - next.v]
                    .iter()
                    .fold(0.0f64, |m, d| m.max(d.abs()))
            }
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

pub struct SimOutcome {
    pub metrics: MetricsReport,
    pub snapshot: FleetSnapshot,
    pub events: EventLog,
    pub traces: BTreeMap<VehicleId, VehicleTrace>,
    /// `(time, RR, CR)` after every planning period.
    pub rates: Vec<(f64, f64, f64)>,
    pub bev_frames: Vec<(f64, RgbImage)>,
    pub effective_config: SimConfig,
}

struct Route {
    target: [f64; 2],
    path: WaypointPath,
    arc: Vec<f64>,
    index: PathIndex,
}

enum Dispatcher {
    Rule(crate::dispatch::DispatchRule),
    Model(Box<ModelDispatcher>),
}

struct Engine<'a> {
    graph: &'a LaneGraph,
    config: &'a SimConfig,
    params: PlannerParams,
    route_opts: RouteOptions,
    style: BevStyle,
    snap: FleetSnapshot,
    log: EventLog,
    routes: BTreeMap<VehicleId, Route>,
    /// Vehicles waiting for a route, with their target.
    unrouted: BTreeMap<VehicleId, [f64; 2]>,
    traces: BTreeMap<VehicleId, VehicleTrace>,
    frames: Vec<Frame>,
    separation_violations: usize,
    step_count: usize,
}

impl Engine<'_> {
    /// Step count times `dt`, divided rather than multiplied when `dt` is
    /// the reciprocal of a whole number so times print as short decimals.
    fn time_at(&self, steps: usize) -> f64 {
        let per_second = 1.0 / self.config.dt;
        if (per_second - per_second.round()).abs() < 1e-9 {
            steps as f64 / per_second.round()
        } else {
            steps as f64 * self.config.dt
        }
    }

    fn now(&self) -> f64 {
        self.time_at(self.step_count)
    }

    fn bev(&self) -> RgbImage {
        render_bev(&self.snap, self.graph, &self.style).raster
    }

    fn handle(&mut self, events: Vec<StageEvent>) {
        let now = self.now();
        for e in events {
            match e {
                StageEvent::PickedUp { vehicle, request } => {
                    self.log.push(now, EventKind::PickedUp, Some(vehicle), Some(request), "");
                    self.routes.remove(&vehicle);
                }
                StageEvent::NeedsPath { vehicle, target } => {
                    self.unrouted.insert(vehicle, target);
                }
                StageEvent::Completed { vehicle, request } => {
                    self.log.push(now, EventKind::Completed, Some(vehicle), Some(request), "");
                    self.routes.remove(&vehicle);
                    self.unrouted.remove(&vehicle);
                }
            }
        }
    }

    fn advance_all(&mut self) {
        let busy: Vec<VehicleId> = self.snap.vehicles.values().filter(|v| !v.free).map(|v| v.id).collect();
        for v in busy {
            let events = advance_stage(&mut self.snap, v, self.config.arrival_tolerance);
            self.handle(events);
        }
    }

    /// A* from the vehicle pose to the lane waypoint nearest `target`,
    /// densified and smoothed.
    fn route(&mut self, vehicle: VehicleId, target: [f64; 2]) -> bool {
        let z = self.snap.states[&vehicle];
        let Some(goal) = self.graph.snap(target, None, self.config.snap_radius) else {
            return false;
        };
        let goal = Pose::new(target[0], target[1], self.graph.waypoint(goal).heading);
        let Ok(raw) = astar_route(self.graph, Pose::new(z.x, z.y, z.heading), goal, &self.route_opts) else {
            return false;
        };
        let dense = densify_path(&raw, self.params.v_ref, self.config.dt, self.config.w_dis);
        let path = smooth_path(&dense, self.config.smooth_window, self.config.smooth_order).path;
        let arc = path.arc_lengths();
        let index = PathIndex::new(&path);
        self.routes.insert(vehicle, Route { target, path, arc, index });
        true
    }

    fn route_pending(&mut self) {
        let now = self.now();
        let todo: Vec<(VehicleId, [f64; 2])> = self.unrouted.iter().map(|(v, t)| (*v, *t)).collect();
        for (v, target) in todo {
            if self.route(v, target) {
                self.unrouted.remove(&v);
            } else {
                let request = self.snap.vehicles[&v].request;
                self.log.push(now, EventKind::RouteFailed, Some(v), request, format!("no route to {target:?}"));
            }
        }
    }

    /// Routed vehicles standing still at the end of their path without
    /// having reached the target, e.g. after overshooting a late lane change.
    fn stalled(&mut self) -> Vec<(VehicleId, [f64; 2])> {
        let mut out = Vec::new();
        for (id, r) in self.routes.iter_mut() {
            let z = &self.snap.states[id];
            if z.v > STALL_SPEED || distance(z.position(), r.target) <= self.config.arrival_tolerance {
                continue;
            }
            let idx = nearest_waypoint(&mut r.index, z.position());
            let remaining = r.arc.last().copied().unwrap_or(0.0) - r.arc[idx];
            if remaining < r.path.gaps().fold(0.0, f64::max) {
                out.push((*id, r.target));
            }
        }
        out
    }

    fn reroute_stalled(&mut self) {
        let now = self.now();
        for (v, target) in self.stalled() {
            let request = self.snap.vehicles[&v].request;
            if self.route(v, target) {
                self.log.push(now, EventKind::Rerouted, Some(v), request, "stopped short of the target");
            } else {
                self.log.push(now, EventKind::RouteFailed, Some(v), request, format!("no route to {target:?}"));
            }
        }
    }

    fn plan_and_execute(&mut self, grouping_client: Option<&dyn ChatClient>) -> Result<(), SimError> {
        self.reroute_stalled();
        let now = self.now();
        let mut active = BTreeMap::new();
        let mut idle = BTreeMap::new();
        for (id, z) in &self.snap.states {
            match self.routes.get_mut(id) {
                Some(r) => {
                    let reference = reference_states(&r.path, &r.arc, &mut r.index, z, &self.params);
                    let controls = initial_controls(z, &reference, &self.params);
                    active.insert(*id, MemberInput { z0: *z, reference, controls });
                }
                None => {
                    idle.insert(*id, *z);
                }
            }
        }
        let states: BTreeMap<VehicleId, VehicleState> = active.iter().map(|(id, m)| (*id, m.z0)).collect();
        let groups = match (self.config.grouping, grouping_client) {
            (GroupingChoice::Model, Some(client)) if !states.is_empty() => {
                let settings = MessageSettings { v_ref: self.params.v_ref, ..Default::default() };
                let out = build_groups_via_model(&self.snap, &states, &self.bev(), client, &settings, self.params.r_tele);
                if let Some(reason) = out.fallback {
                    self.log.push(now, EventKind::GroupingFallback, None, None, reason);
                }
                out.groups
            }
            _ => build_groups_threshold(&states, self.params.r_tele),
        };
        let plan = plan_all(&groups, &active, &idle, &self.params, self.config.workers)?;
        for (members, report) in &plan.reports {
            if let Some(lambda) = report.regularization {
                self.log.push(now, EventKind::RegularizationApplied, Some(members[0]), None, format!("{lambda:.3e}"));
            }
            if !report.warnings.is_empty() {
                self.log.push(now, EventKind::ConvergenceWarning, Some(members[0]), None, report.warnings.join("; "));
            }
        }

        for s in 0..self.params.execute {
            let time = self.time_at(self.step_count + 1);
            for (id, z) in self.snap.states.iter_mut() {
                let mut u = plan.trajectories[id].controls[s];
                if z.v + self.params.kinematics.dt * u.accel < 0.0 {
                    u.accel = -z.v / self.params.kinematics.dt;
                }
                let next = step(z, &u, &self.params.kinematics).unwrap_or_else(|_| {
                    u.steer = 0.0;
                    step(z, &u, &self.params.kinematics).expect("straight motion stays in the model domain")
                });
                let trace = self.traces.get_mut(id).expect("trace per vehicle");
                trace.controls.push(u);
                trace.states.push(next);
                trace.times.push(time);
                *z = next;
            }
            self.step_count += 1;
            self.snap.sim_time = self.now();
            self.record_frame();
            self.advance_all();
        }
        Ok(())
    }

    fn record_frame(&mut self) {
        let positions: BTreeMap<VehicleId, [f64; 2]> = self
            .snap
            .vehicles
            .values()
            .filter(|v| !v.free)
            .map(|v| (v.id, self.snap.states[&v.id].position()))
            .collect();
        let p: Vec<[f64; 2]> = positions.values().copied().collect();
        let limit = 2.0 * self.params.r_safe;
        if (0..p.len()).any(|i| (i + 1..p.len()).any(|j| distance(p[i], p[j]) < limit)) {
            self.separation_violations += 1;
        }
        self.frames.push(Frame { time: self.now(), positions });
    }
}

/// Runs `scenario` on `graph` to completion. Requests are released at the
/// first multiple of `t_s` at or after their scripted time, and their
/// spawn time becomes that release time. The loop stops once `t_sim` has
/// passed and every released request has arrived, as soon as every
/// scripted request has arrived, or at `2 t_sim`.
pub fn run(
    scenario: &Scenario,
    graph: &LaneGraph,
    config: &SimConfig,
    clients: ModelClients,
) -> Result<SimOutcome, SimError> {
    config.validate()?;
    scenario.validate(graph, config.snap_radius)?;
    let params = config.planner_params();
    let ModelClients { dispatch: dispatch_client, grouping: grouping_client } = clients;
    let mut dispatcher = match config.dispatcher {
        DispatcherChoice::Rule(r) => Dispatcher::Rule(r),
        DispatcherChoice::Model => Dispatcher::Model(Box::new(ModelDispatcher {
            client: dispatch_client.ok_or(SimError::MissingClient("model dispatcher"))?,
            embedder: Box::new(HashEmbedder::default()),
            memory: MemoryContainer::new(),
            params: ModelParams {
                k: config.memory_k,
                omega: config.memory_omega,
                t_max: config.t_max,
                message: MessageSettings { v_ref: params.v_ref, ..Default::default() },
                ..Default::default()
            },
        })),
    };
    if config.grouping == GroupingChoice::Model && grouping_client.is_none() {
        return Err(SimError::MissingClient("model grouping"));
    }

    let mut snap = FleetSnapshot::default();
    let mut traces = BTreeMap::new();
    for v in &scenario.vehicles {
        let id = VehicleId(v.id);
        snap.vehicles.insert(id, VehicleRecord::idle(id, 0.0));
        snap.states.insert(id, v.state());
        traces.insert(id, VehicleTrace { times: vec![0.0], states: vec![v.state()], controls: vec![] });
    }
    let mut engine = Engine {
        graph,
        config,
        params: params.clone(),
        route_opts: RouteOptions {
            lane_change_penalty: config.lane_change_penalty,
            snap_radius: config.snap_radius,
        },
        style: BevStyle::covering(graph.bounds(), config.bev_pixels_per_meter, 10.0),
        snap,
        log: EventLog::default(),
        routes: BTreeMap::new(),
        unrouted: BTreeMap::new(),
        traces,
        frames: Vec::new(),
        separation_violations: 0,
        step_count: 0,
    };
    engine.record_frame();

    let n_total = scenario.requests.len();
    let mut next_request = 0;
    let mut rates = Vec::new();
    let mut bev_frames = Vec::new();
    let eps = 1e-9;
    loop {
        let now = engine.now();
        let released_all = next_request == n_total;
        let all_arrived = engine.snap.requests.values().all(|r| r.arrived);
        if (n_total > 0 && released_all && all_arrived)
            || (now >= config.t_sim - eps && all_arrived)
            || now >= 2.0 * config.t_sim - eps
        {
            break;
        }

        let boundary = ((now + eps) / config.t_s).floor() * config.t_s;
        while next_request < n_total && scenario.requests[next_request].spawn_time <= boundary + eps {
            let spec = &scenario.requests[next_request];
            let req = PassengerRequest::new(RequestId(spec.id), spec.pickup, spec.destination, boundary);
            engine.log.push(now, EventKind::RequestReleased, None, Some(req.id), "");
            engine.snap.requests.insert(req.id, req);
            next_request += 1;
        }

        if trigger_dispatch(&engine.snap) {
            let free = engine.snap.free_vehicles().count();
            let waiting = engine.snap.pending_requests().count();
            engine.log.push(now, EventKind::DispatchTriggered, None, None, format!("{free} free, {waiting} waiting"));
            let bev = (config.emit_bev || matches!(dispatcher, Dispatcher::Model(_))).then(|| engine.bev());
            let decision = match &mut dispatcher {
                Dispatcher::Rule(rule) => rule.apply(&engine.snap, config.t_max),
                Dispatcher::Model(m) => {
                    let out = m.dispatch(&engine.snap, bev.as_ref().expect("rendered for the model"));
                    if let Some(reason) = out.fallback {
                        engine.log.push(now, EventKind::DispatchFallback, None, None, reason);
                    }
                    out.decision
                }
            };
            if config.emit_bev {
                bev_frames.push((now, bev.expect("rendered when emitting")));
            }
            engine.snap = apply_assignment(&engine.snap, &decision.pairs)?;
            for (v, r) in &decision.pairs {
                engine.log.push(now, EventKind::Assigned, Some(*v), Some(*r), "");
                engine.unrouted.insert(*v, engine.snap.requests[r].pickup);
                engine.routes.remove(v);
            }
            engine.advance_all();
        }

        engine.route_pending();
        engine.plan_and_execute(grouping_client.as_deref())?;
        if let Ok((rr, cr)) = compute_rates(&engine.snap, n_total) {
            rates.push((engine.now(), rr, cr));
        }
    }

    let final_time = engine.now();
    let n_picked = engine.snap.requests.values().filter(|r| r.picked).count();
    let n_arrived = engine.snap.requests.values().filter(|r| r.arrived).count();
    engine.log.push(
        final_time,
        EventKind::Finished,
        None,
        None,
        format!("{n_arrived} of {n_total} requests delivered"),
    );
    let times = compute_task_times(engine.snap.requests.values());
    let rr_cr = compute_rates(&engine.snap, n_total).ok();
    let metrics = MetricsReport {
        dispatcher: config.dispatcher.name().to_string(),
        final_time,
        total_requests: n_total,
        picked: n_picked,
        arrived: n_arrived,
        response_time: times.response,
        completion_time: times.completion,
        response_rate: rr_cr.map(|r| r.0),
        completion_rate: rr_cr.map(|r| r.1),
        distance_penalty: distance_penalty(&engine.frames, config.dp_slot, config.dp_d_max),
        separation_violations: engine.separation_violations,
        dispatch_fallbacks: engine.log.count(EventKind::DispatchFallback),
        convergence_warnings: engine.log.count(EventKind::ConvergenceWarning),
    };
    debug_assert!(engine.snap.vehicles.values().all(|v| v.free == (v.stage == Stage::Idle)));
    Ok(SimOutcome {
        metrics,
        snapshot: engine.snap,
        events: engine.log,
        traces: engine.traces,
        rates,
        bev_frames,
        effective_config: config.clone(),
    })
}
