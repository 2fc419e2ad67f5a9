//! Planning every subgraph of the fleet, in parallel.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::admm::{admm_solve, rollout_forward_only, AdmmReport, MemberInput};
use super::grouping::Subgraph;
use super::PlannerParams;
use crate::dynamics::{ControlInput, VehicleState};
use crate::fleet::VehicleId;

/// States `z_0..z_T` and the controls `u_0..u_{T-1}` between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanOutput {
    pub trajectories: BTreeMap<VehicleId, Trajectory>,
    /// One report per subgraph, in subgraph order.
    pub reports: Vec<(Vec<VehicleId>, AdmmReport)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("vehicle {0} is in more than one subgraph")]
    Overlap(VehicleId),
    #[error("vehicle {0} has no planning input")]
    MissingInput(VehicleId),
    #[error("active vehicle {0} is in no subgraph")]
    Uncovered(VehicleId),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Zero steering and the strongest admissible braking until stopped;
/// a stationary vehicle stays put with zero controls.
pub fn hold_trajectory(z: &VehicleState, params: &PlannerParams) -> Trajectory {
    let brake = vec![ControlInput::new(params.bounds.accel_min.min(0.0), 0.0); params.horizon];
    let (states, controls) = rollout_forward_only(z, &brake, params).expect("straight braking stays in the model domain");
    Trajectory { states, controls }
}

/// Solves each subgraph independently on `workers` threads and merges the
/// results; `idle` vehicles get hold trajectories. Output does not depend
/// on the worker count or on subgraph order.
pub fn plan_all(
    subgraphs: &[Subgraph],
    active: &BTreeMap<VehicleId, MemberInput>,
    idle: &BTreeMap<VehicleId, VehicleState>,
    params: &PlannerParams,
    workers: usize,
) -> Result<PlanOutput, PlanError> {
    let mut seen = BTreeSet::new();
    for g in subgraphs {
        for id in &g.members {
            if !seen.insert(*id) {
                return Err(PlanError::Overlap(*id));
            }
        }
    }
    if let Some(id) = seen.iter().find(|id| !active.contains_key(id)) {
        return Err(PlanError::MissingInput(*id));
    }
    if let Some(id) = active.keys().find(|id| !seen.contains(id)) {
        return Err(PlanError::Uncovered(*id));
    }
    let mut ordered: Vec<&Subgraph> = subgraphs.iter().collect();
    ordered.sort_by_key(|g| g.members[0]);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PlanError::Pool(e.to_string()))?;
    let solved: Vec<_> = pool.install(|| ordered.par_iter().map(|g| admm_solve(g, active, params)).collect());

    let mut out = PlanOutput::default();
    for (g, sol) in ordered.iter().zip(solved) {
        for w in &sol.report.warnings {
            log::debug!("subgraph {:?}: {w}", g.members.iter().map(|v| v.0).collect::<Vec<_>>());
        }
        out.trajectories.extend(sol.trajectories);
        out.reports.push((g.members.clone(), sol.report));
    }
    for (id, z) in idle {
        out.trajectories.insert(*id, hold_trajectory(z, params));
    }
    Ok(out)
}
