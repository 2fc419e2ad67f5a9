use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::fleet::{DistanceMatrix, FleetSnapshot, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessagePurpose {
    Dispatch,
    Grouping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSettings {
    /// Final sentence of every dispatch message.
    pub detour_clause: String,
    pub v_ref: f64,
}

impl Default for MessageSettings {
    fn default() -> Self {
        Self {
            detour_clause: "Note that detour is discouraged.".into(),
            v_ref: 10.0,
        }
    }
}

/// Line-oriented scene description for the model dispatcher or grouping agent.
pub fn compose_human_message(
    snapshot: &FleetSnapshot,
    matrix: Option<&DistanceMatrix>,
    purpose: MessagePurpose,
    settings: &MessageSettings,
) -> String {
    let mut m = String::new();
    let now = snapshot.sim_time;
    writeln!(m, "time: {now:.1} s").unwrap();
    match purpose {
        MessagePurpose::Dispatch => {
            writeln!(m, "free vehicles:").unwrap();
            for v in snapshot.free_vehicles() {
                let p = snapshot.position(v.id);
                writeln!(m, "vehicle {} at ({:.1}, {:.1})", v.id, p[0], p[1]).unwrap();
            }
            writeln!(m, "pending requests:").unwrap();
            for r in snapshot.pending_requests() {
                writeln!(
                    m,
                    "request {} at ({:.1}, {:.1}), waiting: {:.1} s",
                    r.id,
                    r.pickup[0],
                    r.pickup[1],
                    r.waiting_time(now)
                )
                .unwrap();
            }
            if let Some(d) = matrix {
                let cols: Vec<String> = d.requests.iter().map(|r| r.to_string()).collect();
                writeln!(m, "distance matrix in m (columns: requests {}):", cols.join(", ")).unwrap();
                for (i, v) in d.vehicles.iter().enumerate() {
                    let row: Vec<String> = d.values[i].iter().map(|x| format!("{x:.1}")).collect();
                    writeln!(m, "from vehicle {v}: {}", row.join(", ")).unwrap();
                }
            }
            writeln!(
                m,
                "In the image, red squares are passenger requests, green rectangles are free vehicles, \
                 yellow rectangles are occupied vehicles, and arrows show each vehicle's heading."
            )
            .unwrap();
            writeln!(
                m,
                "Reason step by step, then give the final answer as <pairs>[[vehicle, request], ...]</pairs>."
            )
            .unwrap();
            m.push_str(&settings.detour_clause);
        }
        MessagePurpose::Grouping => {
            writeln!(m, "active vehicles:").unwrap();
            for v in snapshot.vehicles.values().filter(|v| v.stage != Stage::Idle) {
                let z = snapshot.states[&v.id];
                writeln!(
                    m,
                    "vehicle {} at ({:.1}, {:.1}), heading: {:.2} rad, speed: {:.1} m/s, reference speed: {:.1} m/s",
                    v.id, z.x, z.y, z.heading, z.v, settings.v_ref
                )
                .unwrap();
            }
            m.push_str(
                "Group vehicles whose planned motions may conflict within the planning horizon. \
                 Answer with <groups>[[vehicle, ...], ...]</groups>.",
            );
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;
    use crate::fleet::{distance_matrix, PassengerRequest, RequestId, VehicleId, VehicleRecord};

    fn one_each() -> FleetSnapshot {
        let mut s = FleetSnapshot::default();
        s.sim_time = 42.0;
        s.vehicles.insert(VehicleId(6), VehicleRecord::idle(VehicleId(6), 0.0));
        s.states.insert(VehicleId(6), VehicleState::new(1.0, 2.0, 0.0, 0.0));
        s.requests
            .insert(RequestId(17), PassengerRequest::new(RequestId(17), [4.0, 6.0], [50.0, 6.0], 0.0));
        s
    }

    #[test]
    fn dispatch_message_lines() {
        let s = one_each();
        let d = distance_matrix(&s).unwrap();
        let settings = MessageSettings::default();
        let msg = compose_human_message(&s, Some(&d), MessagePurpose::Dispatch, &settings);
        assert_eq!(msg.lines().filter(|l| l.starts_with("vehicle ")).count(), 1);
        assert_eq!(msg.lines().filter(|l| l.starts_with("request ")).count(), 1);
        assert!(msg.contains("waiting: 42.0 s"));
        assert!(msg.contains("from vehicle 6: 5.0"));
        assert_eq!(msg.lines().last().unwrap(), settings.detour_clause);
    }

    #[test]
    fn grouping_lists_busy_vehicles_only() {
        let mut s = one_each();
        s.vehicles.insert(VehicleId(2), VehicleRecord::idle(VehicleId(2), 0.0));
        s.states.insert(VehicleId(2), VehicleState::new(0.0, 0.0, 0.5, 7.0));
        s.vehicles.get_mut(&VehicleId(2)).unwrap().stage = Stage::ToPickup;
        let msg = compose_human_message(&s, None, MessagePurpose::Grouping, &MessageSettings::default());
        let lines: Vec<&str> = msg.lines().filter(|l| l.starts_with("vehicle ")).collect();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains("speed: 7.0 m/s, reference speed: 10.0 m/s"));
    }
}
