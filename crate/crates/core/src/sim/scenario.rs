//! Scenario files: map reference, initial vehicle poses and a request
//! script, plus seeded generation of random scenarios.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::VehicleState;
use crate::fleet::{RequestId, VehicleId};
use crate::geometry::distance;
use crate::road::{astar_nodes, build_lane_graph, LaneGraph, MapError, MapSpec, RouteOptions};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    #[serde(default)]
    pub speed: f64,
}

impl VehicleSpec {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.heading, self.speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestSpec {
    pub id: u32,
    pub spawn_time: f64,
    pub pickup: [f64; 2],
    pub destination: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    /// Map file, relative to the scenario file unless absolute.
    pub map: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "vehicle", default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(rename = "request", default)]
    pub requests: Vec<RequestSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario file could not be read: {0}")]
    Io(String),
    #[error("scenario file is not valid: {0}")]
    Parse(String),
    #[error("unsupported scenario schema version {0} (expected {SCENARIO_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("scenario has no vehicles")]
    NoVehicles,
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u32 },
    #[error("request {0} spawns before the request listed ahead of it")]
    SpawnOrder(u32),
    #[error("request {0} has a negative or non-finite spawn time")]
    SpawnTime(u32),
    #[error("{what} at ({x}, {y}) is outside the map")]
    OutOfBounds { what: String, x: f64, y: f64 },
    #[error("{what} at ({x}, {y}) is not within {radius} m of a lane")]
    OffLane { what: String, x: f64, y: f64, radius: f64 },
    #[error("map can hold at most {capacity} {what}, {requested} requested")]
    Capacity { what: &'static str, capacity: usize, requested: usize },
    #[error("map {path}: {message}")]
    Map { path: String, message: String },
    #[error("{0} must be at least 1")]
    Count(&'static str),
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if s.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedVersion(s.schema_version));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// The map path resolved against the directory holding the scenario.
    pub fn map_path(&self, scenario_file: &Path) -> PathBuf {
        match scenario_file.parent() {
            Some(dir) if self.map.is_relative() => dir.join(&self.map),
            _ => self.map.clone(),
        }
    }

    /// Loads the scenario at `path` and builds the lane graph of its map.
    pub fn load_with_map(path: &Path) -> Result<(Self, LaneGraph), ScenarioError> {
        let scenario = Self::load(path)?;
        let map_path = scenario.map_path(path);
        let map_err = |e: MapError| ScenarioError::Map { path: map_path.display().to_string(), message: e.to_string() };
        let spec = MapSpec::load(&map_path).map_err(map_err)?;
        let graph = build_lane_graph(&spec).map_err(map_err)?;
        Ok((scenario, graph))
    }

    /// Checks ids, spawn order, and that every position lies on the map
    /// within `snap_radius` of a lane.
    pub fn validate(&self, graph: &LaneGraph, snap_radius: f64) -> Result<(), ScenarioError> {
        if self.vehicles.is_empty() {
            return Err(ScenarioError::NoVehicles);
        }
        let mut ids = BTreeSet::new();
        for v in &self.vehicles {
            if !ids.insert(v.id) {
                return Err(ScenarioError::DuplicateId { kind: "vehicle", id: v.id });
            }
        }
        let mut ids = BTreeSet::new();
        let mut last = 0.0;
        for r in &self.requests {
            if !ids.insert(r.id) {
                return Err(ScenarioError::DuplicateId { kind: "request", id: r.id });
            }
            if !(r.spawn_time.is_finite() && r.spawn_time >= 0.0) {
                return Err(ScenarioError::SpawnTime(r.id));
            }
            if r.spawn_time < last {
                return Err(ScenarioError::SpawnOrder(r.id));
            }
            last = r.spawn_time;
        }
        let bounds = graph.bounds().expanded(snap_radius);
        let check = |what: String, p: [f64; 2]| {
            if !bounds.contains(p) {
                return Err(ScenarioError::OutOfBounds { what, x: p[0], y: p[1] });
            }
            if graph.snap(p, None, snap_radius).is_none() {
                return Err(ScenarioError::OffLane { what, x: p[0], y: p[1], radius: snap_radius });
            }
            Ok(())
        };
        for v in &self.vehicles {
            check(format!("vehicle {}", v.id), [v.x, v.y])?;
        }
        for r in &self.requests {
            check(format!("pickup of request {}", r.id), r.pickup)?;
            check(format!("destination of request {}", r.id), r.destination)?;
        }
        Ok(())
    }

    pub fn vehicle_ids(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.vehicles.iter().map(|v| VehicleId(v.id))
    }

    pub fn request_ids(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.requests.iter().map(|r| RequestId(r.id))
    }
}

/// Parameters of [`generate_scenario`] besides the map and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub vehicles: usize,
    pub requests: usize,
    pub t_sim: f64,
    pub t_s: f64,
    /// Minimum distance between initial vehicle positions, m.
    pub vehicle_gap: f64,
    /// Minimum straight-line trip length, m.
    pub min_trip: f64,
    pub snap_radius: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            vehicles: 10,
            requests: 30,
            t_sim: 200.0,
            t_s: 10.0,
            vehicle_gap: 10.0,
            min_trip: 40.0,
            snap_radius: 5.0,
        }
    }
}

/// Random scenario on `graph`: vehicles parked on distinct lane waypoints
/// at least `vehicle_gap` apart, trips between lane waypoints that are
/// routable, spawn times uniform over `[0, 0.6 t_sim]` rounded to `t_s`.
/// Junction connector lanes are never used. Same inputs, same scenario.
pub fn generate_scenario(
    graph: &LaneGraph,
    map: PathBuf,
    opts: &GenerateOptions,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    if opts.vehicles == 0 {
        return Err(ScenarioError::Count("vehicle count"));
    }
    if opts.requests == 0 {
        return Err(ScenarioError::Count("request count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Only waypoints every other one can be driven to and from; lane
    // starts fed solely by lane changes are dead ends for routing.
    let mut candidates: Vec<usize> = (0..graph.len())
        .filter(|&i| !graph.lanes()[graph.waypoint(i).lane].id.contains('>'))
        .collect();
    let centre = graph.bounds().centre();
    if let Some(&hub) = candidates.iter().min_by(|&&a, &&b| {
        distance(graph.waypoint(a).position(), centre).total_cmp(&distance(graph.waypoint(b).position(), centre))
    }) {
        let core = graph.component_of(hub);
        candidates.retain(|&i| core[i]);
    }

    let mut order = candidates.clone();
    order.shuffle(&mut rng);
    let mut parked: Vec<usize> = Vec::new();
    for &w in &order {
        let p = graph.waypoint(w).position();
        if parked.iter().all(|&q| distance(graph.waypoint(q).position(), p) >= opts.vehicle_gap) {
            parked.push(w);
            if parked.len() == opts.vehicles {
                break;
            }
        }
    }
    if parked.len() < opts.vehicles {
        return Err(ScenarioError::Capacity { what: "vehicles", capacity: parked.len(), requested: opts.vehicles });
    }
    if opts.requests > candidates.len() {
        return Err(ScenarioError::Capacity { what: "requests", capacity: candidates.len(), requested: opts.requests });
    }

    let route_opts = RouteOptions { snap_radius: opts.snap_radius, ..Default::default() };
    let mut trips = Vec::with_capacity(opts.requests);
    let mut used = BTreeSet::new();
    let mut attempts = 0usize;
    while trips.len() < opts.requests {
        attempts += 1;
        if attempts > 200 * opts.requests + 1000 {
            return Err(ScenarioError::Capacity { what: "requests", capacity: trips.len(), requested: opts.requests });
        }
        let a = candidates[rng.gen_range(0..candidates.len())];
        let b = candidates[rng.gen_range(0..candidates.len())];
        let (pa, pb) = (graph.waypoint(a).position(), graph.waypoint(b).position());
        if used.contains(&a) || distance(pa, pb) < opts.min_trip || astar_nodes(graph, a, b, &route_opts).is_none() {
            continue;
        }
        used.insert(a);
        let spawn = rng.gen_range(0.0..=0.6 * opts.t_sim);
        trips.push(((spawn / opts.t_s).round() * opts.t_s, pa, pb));
    }
    trips.sort_by(|x, y| x.0.total_cmp(&y.0));

    let scenario = Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION,
        map,
        seed,
        vehicles: parked
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let wp = graph.waypoint(w);
                VehicleSpec { id: i as u32, x: wp.x, y: wp.y, heading: wp.heading, speed: 0.0 }
            })
            .collect(),
        requests: trips
            .into_iter()
            .enumerate()
            .map(|(i, (t, p, d))| RequestSpec { id: i as u32, spawn_time: t, pickup: p, destination: d })
            .collect(),
    };
    scenario.validate(graph, opts.snap_radius)?;
    Ok(scenario)
}
