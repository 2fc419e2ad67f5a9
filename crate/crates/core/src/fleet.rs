//! Requests, vehicles and their lifecycle bookkeeping.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::VehicleState;
use crate::geometry::distance;
use crate::road::WaypointPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerRequest {
    pub id: RequestId,
    pub pickup: [f64; 2],
    pub destination: [f64; 2],
    pub spawn_time: f64,
    pub assigned: bool,
    pub picked: bool,
    pub arrived: bool,
    pub vehicle: Option<VehicleId>,
    pub pickup_time: Option<f64>,
    pub arrival_time: Option<f64>,
}

impl PassengerRequest {
    pub fn new(id: RequestId, pickup: [f64; 2], destination: [f64; 2], spawn_time: f64) -> Self {
        Self {
            id,
            pickup,
            destination,
            spawn_time,
            assigned: false,
            picked: false,
            arrived: false,
            vehicle: None,
            pickup_time: None,
            arrival_time: None,
        }
    }

    /// Spawned and still waiting for a vehicle.
    pub fn is_pending(&self) -> bool {
        self.vehicle.is_none()
    }

    pub fn waiting_time(&self, now: f64) -> f64 {
        now - self.spawn_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Idle,
    ToPickup,
    ToDropoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: VehicleId,
    pub path: Option<WaypointPath>,
    pub request: Option<RequestId>,
    pub free: bool,
    pub stage: Stage,
    /// Time the vehicle last became free.
    pub idle_since: f64,
}

impl VehicleRecord {
    pub fn idle(id: VehicleId, since: f64) -> Self {
        Self {
            id,
            path: None,
            request: None,
            free: true,
            stage: Stage::Idle,
            idle_since: since,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub sim_time: f64,
    pub requests: BTreeMap<RequestId, PassengerRequest>,
    pub vehicles: BTreeMap<VehicleId, VehicleRecord>,
    pub states: BTreeMap<VehicleId, VehicleState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Vehicle(VehicleId),
    Request(RequestId),
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Vehicle(v) => write!(f, "vehicle {v}"),
            Subject::Request(r) => write!(f, "request {r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FleetError {
    #[error("invalid assignment involving {0}")]
    InvalidAssignment(Subject),
    #[error("distance matrix needs at least one free vehicle and one pending request")]
    EmptyMatrix,
    #[error("inconsistent snapshot at {0}: {1}")]
    Inconsistent(Subject, &'static str),
}

impl FleetSnapshot {
    pub fn free_vehicles(&self) -> impl Iterator<Item = &VehicleRecord> + '_ {
        self.vehicles.values().filter(|v| v.free)
    }

    pub fn pending_requests(&self) -> impl Iterator<Item = &PassengerRequest> + '_ {
        self.requests.values().filter(|r| r.is_pending())
    }

    pub fn position(&self, v: VehicleId) -> [f64; 2] {
        self.states[&v].position()
    }

    /// Checks lifecycle flags, timestamps and vehicle/request cross-references.
    pub fn validate(&self) -> Result<(), FleetError> {
        use Subject::*;
        for r in self.requests.values() {
            let s = Request(r.id);
            if (r.picked && !r.assigned) || (r.arrived && !r.picked) {
                return Err(FleetError::Inconsistent(s, "lifecycle flags out of order"));
            }
            if r.pickup_time.is_some() != r.picked || r.arrival_time.is_some() != r.arrived {
                return Err(FleetError::Inconsistent(s, "timestamp presence does not match flags"));
            }
            if r.vehicle.is_some() != r.assigned {
                return Err(FleetError::Inconsistent(s, "assigned flag does not match vehicle"));
            }
            if let Some(tp) = r.pickup_time {
                if tp < r.spawn_time || r.arrival_time.is_some_and(|ta| ta < tp) {
                    return Err(FleetError::Inconsistent(s, "timestamps out of order"));
                }
            }
            if let Some(v) = r.vehicle {
                if !r.arrived && self.vehicles.get(&v).and_then(|rec| rec.request) != Some(r.id) {
                    return Err(FleetError::Inconsistent(s, "vehicle does not point back"));
                }
            }
        }
        for v in self.vehicles.values() {
            let s = Vehicle(v.id);
            let idle = v.stage == Stage::Idle;
            if v.free != idle || idle != v.request.is_none() {
                return Err(FleetError::Inconsistent(s, "free flag, stage and request disagree"));
            }
            if let Some(r) = v.request {
                let req = self.requests.get(&r).ok_or(FleetError::Inconsistent(s, "unknown request"))?;
                if req.vehicle != Some(v.id) || req.arrived {
                    return Err(FleetError::Inconsistent(s, "request does not point back"));
                }
                let expect = if req.picked { Stage::ToDropoff } else { Stage::ToPickup };
                if v.stage != expect {
                    return Err(FleetError::Inconsistent(s, "stage does not match request progress"));
                }
            }
            if !self.states.contains_key(&v.id) {
                return Err(FleetError::Inconsistent(s, "missing state"));
            }
        }
        Ok(())
    }

    /// Stronger check that also holds once routing has run: busy vehicles
    /// carry a reference path.
    pub fn validate_routed(&self) -> Result<(), FleetError> {
        self.validate()?;
        match self.vehicles.values().find(|v| v.stage != Stage::Idle && v.path.is_none()) {
            Some(v) => Err(FleetError::Inconsistent(Subject::Vehicle(v.id), "busy vehicle without a path")),
            None => Ok(()),
        }
    }
}

/// True when at least one request waits and at least one vehicle is free.
pub fn trigger_dispatch(snapshot: &FleetSnapshot) -> bool {
    snapshot.pending_requests().next().is_some() && snapshot.free_vehicles().next().is_some()
}

/// Free-vehicle × pending-request distances, rows and columns in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub vehicles: Vec<VehicleId>,
    pub requests: Vec<RequestId>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row][col]
    }
}

pub fn distance_matrix(snapshot: &FleetSnapshot) -> Result<DistanceMatrix, FleetError> {
    let vehicles: Vec<VehicleId> = snapshot.free_vehicles().map(|v| v.id).collect();
    let requests: Vec<RequestId> = snapshot.pending_requests().map(|r| r.id).collect();
    if vehicles.is_empty() || requests.is_empty() {
        return Err(FleetError::EmptyMatrix);
    }
    let values = vehicles
        .iter()
        .map(|v| {
            let p = snapshot.position(*v);
            requests.iter().map(|r| distance(p, snapshot.requests[r].pickup)).collect()
        })
        .collect();
    Ok(DistanceMatrix {
        vehicles,
        requests,
        values,
    })
}

/// Binds each vehicle to its request. Any invalid pair rejects the batch.
pub fn apply_assignment(snapshot: &FleetSnapshot, pairs: &[(VehicleId, RequestId)]) -> Result<FleetSnapshot, FleetError> {
    let mut seen_v = std::collections::BTreeSet::new();
    let mut seen_r = std::collections::BTreeSet::new();
    for &(v, r) in pairs {
        let vehicle_ok = snapshot.vehicles.get(&v).is_some_and(|rec| rec.free);
        if !vehicle_ok || !seen_v.insert(v) {
            return Err(FleetError::InvalidAssignment(Subject::Vehicle(v)));
        }
        let request_ok = snapshot.requests.get(&r).is_some_and(|req| req.is_pending());
        if !request_ok || !seen_r.insert(r) {
            return Err(FleetError::InvalidAssignment(Subject::Request(r)));
        }
    }
    let mut next = snapshot.clone();
    for &(v, r) in pairs {
        let req = next.requests.get_mut(&r).expect("checked");
        req.assigned = true;
        req.vehicle = Some(v);
        let rec = next.vehicles.get_mut(&v).expect("checked");
        rec.free = false;
        rec.request = Some(r);
        rec.stage = Stage::ToPickup;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StageEvent {
    PickedUp { vehicle: VehicleId, request: RequestId },
    /// The vehicle needs a fresh route to `target`.
    NeedsPath { vehicle: VehicleId, target: [f64; 2] },
    Completed { vehicle: VehicleId, request: RequestId },
}

/// Moves a busy vehicle to its next stage once it is within `tolerance` of
/// its current target.
pub fn advance_stage(snapshot: &mut FleetSnapshot, vehicle: VehicleId, tolerance: f64) -> Vec<StageEvent> {
    let now = snapshot.sim_time;
    let pos = snapshot.position(vehicle);
    let rec = snapshot.vehicles.get_mut(&vehicle).expect("known vehicle");
    let Some(rid) = rec.request else { return Vec::new() };
    let req = snapshot.requests.get_mut(&rid).expect("cross-referenced request");
    match rec.stage {
        Stage::ToPickup if distance(pos, req.pickup) <= tolerance => {
            req.picked = true;
            req.pickup_time = Some(now);
            rec.stage = Stage::ToDropoff;
            vec![
                StageEvent::PickedUp { vehicle, request: rid },
                StageEvent::NeedsPath {
                    vehicle,
                    target: req.destination,
                },
            ]
        }
        Stage::ToDropoff if distance(pos, req.destination) <= tolerance => {
            req.arrived = true;
            req.arrival_time = Some(now);
            rec.stage = Stage::Idle;
            rec.free = true;
            rec.request = None;
            rec.path = None;
            rec.idle_since = now;
            vec![StageEvent::Completed { vehicle, request: rid }]
        }
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RequestReleased,
    DispatchTriggered,
    DispatchFallback,
    Assigned,
    PickedUp,
    Completed,
    RouteFailed,
    Rerouted,
    ConvergenceWarning,
    RegularizationApplied,
    GroupingFallback,
    Finished,
}

/// One line of the run's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vehicle: Option<VehicleId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub request: Option<RequestId>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn push(&mut self, time: f64, kind: EventKind, vehicle: Option<VehicleId>, request: Option<RequestId>, detail: impl Into<String>) {
        self.records.push(EventRecord {
            time,
            kind,
            vehicle,
            request,
            detail: detail.into(),
        });
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// JSON lines, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}
