//! Per-step reference states along a vehicle's path and a simple
//! path-following rollout used to seed the optimiser.

use super::PlannerParams;
use crate::dynamics::{step, ControlInput, VehicleState};
use crate::geometry::{distance, wrap_angle};
use crate::road::{nearest_waypoint, PathIndex, WaypointPath};

/// Arc length of the projection of `position` near waypoint `idx`.
fn project_arc(path: &WaypointPath, arc: &[f64], idx: usize, position: [f64; 2]) -> f64 {
    let poses = path.poses();
    let (a, b) = if idx + 1 < poses.len() { (idx, idx + 1) } else { (idx - 1, idx) };
    let (pa, pb) = (poses[a].position(), poses[b].position());
    let seg = [pb[0] - pa[0], pb[1] - pa[1]];
    let len2 = seg[0] * seg[0] + seg[1] * seg[1];
    let t = ((position[0] - pa[0]) * seg[0] + (position[1] - pa[1]) * seg[1]) / len2;
    let s = arc[a] + t * (arc[b] - arc[a]);
    s.clamp(arc[a.saturating_sub(1)], arc[(b + 1).min(arc.len() - 1)])
}

/// `horizon + 1` reference states starting at the vehicle's projection
/// onto the path. Speed ramps from the current speed towards `v_ref` at
/// `ref_accel` and tapers to zero at the path end; positions advance by
/// the reference speed each step.
pub fn reference_states(
    path: &WaypointPath,
    arc: &[f64],
    index: &mut PathIndex,
    state: &VehicleState,
    params: &PlannerParams,
) -> Vec<VehicleState> {
    let dt = params.kinematics.dt;
    let total = *arc.last().expect("path has poses");
    let idx = nearest_waypoint(index, state.position());
    let mut s = project_arc(path, arc, idx, state.position()).clamp(0.0, total);
    let mut v = state.v.max(0.0);
    let mut out = Vec::with_capacity(params.horizon + 1);
    for tau in 0..=params.horizon {
        let pose = path.pose_at(s, arc);
        if tau > 0 {
            let remaining = (total - s).max(0.0);
            let target = params.v_ref.min((2.0 * params.ref_accel * remaining).sqrt());
            let dv = params.ref_accel * dt;
            v = target.clamp(v - dv, v + dv).max(0.0);
        }
        out.push(VehicleState::new(pose.x, pose.y, pose.heading, v));
        s = (s + v * dt).min(total);
    }
    out
}

/// Pure-pursuit steering with proportional speed control, rolled through
/// the nonlinear model. Always returns `reference.len() - 1` admissible controls.
pub fn initial_controls(z0: &VehicleState, reference: &[VehicleState], params: &PlannerParams) -> Vec<ControlInput> {
    let b = params.kinematics.wheelbase;
    let horizon = reference.len() - 1;
    let mut z = *z0;
    let mut out = Vec::with_capacity(horizon);
    for tau in 0..horizon {
        let lookahead = (0.6 * z.v).max(4.0);
        let target = reference[tau + 1..]
            .iter()
            .find(|r| distance(r.position(), z.position()) >= lookahead)
            .unwrap_or(&reference[horizon]);
        let d = distance(target.position(), z.position());
        let steer = if d > 1e-6 {
            let alpha = wrap_angle((target.y - z.y).atan2(target.x - z.x) - z.heading);
            (2.0 * b * alpha.sin() / d).atan()
        } else {
            0.0
        };
        let accel = 2.0 * (reference[tau + 1].v - z.v);
        let mut u = params.bounds.clamp(ControlInput::new(accel, steer));
        z = match step(&z, &u, &params.kinematics) {
            Ok(next) => next,
            Err(_) => {
                u.steer = 0.0;
                step(&z, &u, &params.kinematics).expect("straight motion is always in the model domain")
            }
        };
        out.push(u);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout;

    fn straight(len: f64) -> WaypointPath {
        let pts: Vec<[f64; 2]> = (0..=(len as usize)).map(|i| [i as f64, 0.0]).collect();
        WaypointPath::from_points(&pts).unwrap()
    }

    #[test]
    fn cruising_reference_advances_by_v_ref() {
        let path = straight(100.0);
        let arc = path.arc_lengths();
        let mut idx = PathIndex::new(&path);
        let p = PlannerParams::default();
        let r = reference_states(&path, &arc, &mut idx, &VehicleState::new(10.0, 0.5, 0.0, 10.0), &p);
        assert_eq!(r.len(), 21);
        assert!((r[0].x - 10.0).abs() < 1e-12);
        assert!((r[20].x - 30.0).abs() < 1e-9);
        assert!(r.iter().all(|s| s.y == 0.0 && s.heading == 0.0));
    }

    #[test]
    fn reference_stops_at_path_end() {
        let path = straight(20.0);
        let arc = path.arc_lengths();
        let mut idx = PathIndex::new(&path);
        let mut p = PlannerParams::default();
        p.horizon = 60;
        let r = reference_states(&path, &arc, &mut idx, &VehicleState::new(10.0, 0.0, 0.0, 5.0), &p);
        assert!(r.iter().all(|s| s.x <= 20.0 + 1e-12));
        assert!(r.windows(2).all(|w| w[1].x >= w[0].x));
        assert!(r.last().unwrap().v < 0.5);
    }

    #[test]
    fn pursuit_follows_straight_line() {
        let path = straight(100.0);
        let arc = path.arc_lengths();
        let mut idx = PathIndex::new(&path);
        let p = PlannerParams::default();
        let z0 = VehicleState::new(0.0, 1.0, 0.0, 8.0);
        let r = reference_states(&path, &arc, &mut idx, &z0, &p);
        let u = initial_controls(&z0, &r, &p);
        let z = rollout(&z0, &u, &p.kinematics).unwrap();
        assert!(z.last().unwrap().y.abs() < 1.0);
        assert!(u.iter().all(|c| p.bounds.contains(c)));
    }
}
