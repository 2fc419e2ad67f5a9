//! Rule-based dispatch baselines. Ties are always broken by smaller ids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DispatchDecision;
use crate::fleet::{FleetSnapshot, PassengerRequest, RequestId, VehicleId};
use crate::geometry::distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchRule {
    DistanceFirst,
    IdleFirst,
    Fcfs,
    MixedFirst,
}

impl DispatchRule {
    pub const ALL: [DispatchRule; 4] = [
        DispatchRule::DistanceFirst,
        DispatchRule::IdleFirst,
        DispatchRule::Fcfs,
        DispatchRule::MixedFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DispatchRule::DistanceFirst => "distance_first",
            DispatchRule::IdleFirst => "idle_first",
            DispatchRule::Fcfs => "fcfs",
            DispatchRule::MixedFirst => "mixed_first",
        }
    }

    pub fn apply(self, snapshot: &FleetSnapshot, t_max: f64) -> DispatchDecision {
        match self {
            DispatchRule::DistanceFirst => dispatch_distance_first(snapshot),
            DispatchRule::IdleFirst => dispatch_idle_first(snapshot),
            DispatchRule::Fcfs => dispatch_fcfs(snapshot),
            DispatchRule::MixedFirst => dispatch_mixed_first(snapshot, t_max),
        }
    }
}

impl fmt::Display for DispatchRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DispatchRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown dispatch rule '{s}'"))
    }
}

struct Pool<'a> {
    snapshot: &'a FleetSnapshot,
    vehicles: Vec<VehicleId>,
    requests: Vec<RequestId>,
    pairs: Vec<(VehicleId, RequestId)>,
}

impl<'a> Pool<'a> {
    fn new(snapshot: &'a FleetSnapshot) -> Self {
        Self {
            snapshot,
            vehicles: snapshot.free_vehicles().map(|v| v.id).collect(),
            requests: snapshot.pending_requests().map(|r| r.id).collect(),
            pairs: Vec::new(),
        }
    }

    fn d(&self, v: VehicleId, r: RequestId) -> f64 {
        distance(self.snapshot.position(v), self.snapshot.requests[&r].pickup)
    }

    fn take(&mut self, v: VehicleId, r: RequestId) {
        self.vehicles.retain(|x| *x != v);
        self.requests.retain(|x| *x != r);
        self.pairs.push((v, r));
    }

    fn nearest_request(&self, v: VehicleId) -> Option<RequestId> {
        // Candidates are in ascending id order, so min_by keeps the smaller id on ties.
        self.requests.iter().copied().min_by(|a, b| self.d(v, *a).total_cmp(&self.d(v, *b)))
    }

    fn nearest_vehicle(&self, r: RequestId) -> Option<VehicleId> {
        self.vehicles.iter().copied().min_by(|a, b| self.d(*a, r).total_cmp(&self.d(*b, r)))
    }

    /// Repeatedly takes the globally closest remaining pair.
    fn greedy(&mut self) {
        loop {
            let mut best: Option<(f64, VehicleId, RequestId)> = None;
            for &v in &self.vehicles {
                for &r in &self.requests {
                    let d = self.d(v, r);
                    if best.map_or(true, |(bd, _, _)| d < bd) {
                        best = Some((d, v, r));
                    }
                }
            }
            match best {
                Some((_, v, r)) => self.take(v, r),
                None => break,
            }
        }
    }

    /// Serves requests in the given order, each with its closest vehicle.
    fn serve_in_order(&mut self, order: &[RequestId]) {
        for &r in order {
            match self.nearest_vehicle(r) {
                Some(v) => self.take(v, r),
                None => break,
            }
        }
    }

    fn finish(self) -> DispatchDecision {
        DispatchDecision {
            pairs: self.pairs,
            reasoning: String::new(),
        }
    }
}

fn by_spawn<'a>(reqs: impl Iterator<Item = &'a PassengerRequest>) -> Vec<RequestId> {
    let mut v: Vec<&PassengerRequest> = reqs.collect();
    v.sort_by(|a, b| a.spawn_time.total_cmp(&b.spawn_time).then(a.id.cmp(&b.id)));
    v.into_iter().map(|r| r.id).collect()
}

/// Closest vehicle–request pair first, repeated until one side runs out.
pub fn dispatch_distance_first(snapshot: &FleetSnapshot) -> DispatchDecision {
    let mut pool = Pool::new(snapshot);
    pool.greedy();
    pool.finish()
}

/// Longest-idle vehicle picks first, taking its nearest request.
pub fn dispatch_idle_first(snapshot: &FleetSnapshot) -> DispatchDecision {
    let mut pool = Pool::new(snapshot);
    let mut order: Vec<(f64, VehicleId)> = snapshot.free_vehicles().map(|v| (v.idle_since, v.id)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, v) in order {
        match pool.nearest_request(v) {
            Some(r) => pool.take(v, r),
            None => break,
        }
    }
    pool.finish()
}

/// Earliest-spawned request first, served by its nearest vehicle.
pub fn dispatch_fcfs(snapshot: &FleetSnapshot) -> DispatchDecision {
    let mut pool = Pool::new(snapshot);
    let order = by_spawn(snapshot.pending_requests());
    pool.serve_in_order(&order);
    pool.finish()
}

/// Requests waiting longer than `t_max` go first in spawn order; the rest
/// are paired by distance.
pub fn dispatch_mixed_first(snapshot: &FleetSnapshot, t_max: f64) -> DispatchDecision {
    let mut pool = Pool::new(snapshot);
    let now = snapshot.sim_time;
    let overdue = by_spawn(snapshot.pending_requests().filter(|r| r.waiting_time(now) > t_max));
    pool.serve_in_order(&overdue);
    pool.greedy();
    pool.finish()
}
