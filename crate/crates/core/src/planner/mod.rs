//! Cooperative multi-vehicle trajectory planning: proximity grouping,
//! per-vehicle linearised problems and a decentralised dual consensus ADMM.

pub mod admm;
pub mod grouping;
pub mod lqr;
pub mod plan;
pub mod problem;
pub mod reference;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlBounds, KinematicParams};

pub use admm::{admm_solve, project_nonneg, rollout_forward_only, AdmmReport, InnerDiagnostics, MemberInput, SubgraphSolution};
pub use grouping::{build_groups_from_lists, build_groups_threshold, build_groups_via_model, GroupingOutcome, Subgraph};
pub use lqr::{kkt_residual, lqr_solve, penalty_weight, LqrFactor, LqrSolution};
pub use plan::{hold_trajectory, plan_all, PlanError, PlanOutput, Trajectory};
pub use problem::{build_local_problem, CouplingRow, LocalProblem, Perturbation, RowTarget};
pub use reference::{initial_controls, reference_states};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Planning horizon in steps.
    pub horizon: usize,
    /// Steps executed before re-planning.
    pub execute: usize,
    pub kinematics: KinematicParams,
    pub bounds: ControlBounds,
    /// Diagonal state weights on (x, y, heading, speed).
    pub q: [f64; 4],
    /// Diagonal control weights on (accel, steer).
    pub r: [f64; 2],
    pub rho: f64,
    pub sigma: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Outer passes stop once no position moves more than this (m).
    pub outer_tolerance: f64,
    /// Disc radius per vehicle; pairs must stay `2 * r_safe` apart.
    pub r_safe: f64,
    /// Extra clearance planned on top of `2 * r_safe`, absorbing the error of
    /// linearising the separation and the dynamics.
    pub separation_margin: f64,
    /// Communication radius used by threshold grouping.
    pub r_tele: f64,
    pub v_ref: f64,
    /// Acceleration used to ramp the reference speed up and down.
    pub ref_accel: f64,
    /// Disables the pairwise separation rows (for comparison runs).
    pub collision_rows: bool,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            execute: 10,
            kinematics: KinematicParams::default(),
            bounds: ControlBounds::default(),
            q: [0.1, 0.1, 0.2, 0.05],
            r: [0.01, 0.1],
            rho: 0.05,
            sigma: 1.0,
            max_inner: 50,
            max_outer: 3,
            outer_tolerance: 1e-3,
            r_safe: 2.5,
            separation_margin: 1.0,
            r_tele: 30.0,
            v_ref: 10.0,
            ref_accel: 2.0,
            collision_rows: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid planner parameter: {0}")]
pub struct ParamError(pub String);

impl PlannerParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |m: &str| Err(ParamError(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least one step");
        }
        if self.execute == 0 || self.execute > self.horizon {
            return bad("execute steps must be in 1..=horizon");
        }
        if !(self.rho > 0.0 && self.sigma > 0.0) {
            return bad("rho and sigma must be positive");
        }
        if !(self.r_safe > 0.0 && self.r_tele > 0.0) {
            return bad("r_safe and r_tele must be positive");
        }
        if !(self.separation_margin >= 0.0) {
            return bad("separation margin must be non-negative");
        }
        if !(self.kinematics.dt > 0.0 && self.kinematics.wheelbase > 0.0) {
            return bad("dt and wheelbase must be positive");
        }
        if self.q.iter().chain(&self.r).any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        if !(self.v_ref > 0.0 && self.ref_accel > 0.0) {
            return bad("v_ref and ref_accel must be positive");
        }
        if self.bounds.accel_min > self.bounds.accel_max || self.bounds.steer_min > self.bounds.steer_max {
            return bad("control bounds are inverted");
        }
        Ok(())
    }
}
