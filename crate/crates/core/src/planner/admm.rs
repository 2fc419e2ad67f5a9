//! Decentralised dual consensus ADMM over one subgraph.
//!
//! Each vehicle `i` keeps dual vectors `p, s, r, y, x` for
//! * its box rows (private, no consensus partner),
//! * its own separation block, shared with its neighbors,
//! * a copy of every neighbor's separation block, and
//! * a replica of each neighbor's copy of its own block, advanced with the
//!   same update the neighbor applies. The replica lets the owner compute
//!   consensus terms without receiving the copies; `mirror_gap` measures
//!   how far replicas and the neighbors' actual copies drift apart.
//!
//! All vehicles update from the same iteration-`k` messages, so the result
//! does not depend on the order in which vehicles are visited.

use std::collections::BTreeMap;

use super::grouping::Subgraph;
use super::lqr::{penalty_weight, LqrFactor};
use super::plan::Trajectory;
use super::problem::{build_local_problem, LocalProblem, Perturbation};
use super::PlannerParams;
use crate::dynamics::{step, ControlInput, VehicleState};
use crate::fleet::VehicleId;
use crate::geometry::{distance, wrap_angle};

/// Componentwise `max(v, 0)`.
pub fn project_nonneg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Block {
    p: Vec<f64>,
    s: Vec<f64>,
    r: Vec<f64>,
    y: Vec<f64>,
    x: Vec<f64>,
}

impl Block {
    fn zeros(n: usize) -> Self {
        Self { p: vec![0.0; n], s: vec![0.0; n], r: vec![0.0; n], y: vec![0.0; n], x: vec![0.0; n] }
    }

    fn reset_multipliers(&mut self) {
        self.p.iter_mut().for_each(|v| *v = 0.0);
        self.s.iter_mut().for_each(|v| *v = 0.0);
    }

    fn reset_all(&mut self) {
        *self = Self::zeros(self.y.len());
    }

    fn max_diff(&self, other: &Block) -> f64 {
        let fields = [(&self.p, &other.p), (&self.s, &other.s), (&self.r, &other.r), (&self.y, &other.y), (&self.x, &other.x)];
        fields
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }

    /// Update of a block held on behalf of `owner`, whose current `y` is
    /// `owner_y`. The holder has `degree` neighbors.
    fn advance_copy(&mut self, owner_y: &[f64], degree: usize, rho: f64, sigma: f64) {
        let c = sigma + 2.0 * rho * degree as f64;
        let w = 2.0 * degree as f64 - 1.0;
        for m in 0..self.y.len() {
            let (y, x) = (self.y[m], self.x[m]);
            self.p[m] += rho * (y - owner_y[m]);
            self.s[m] += sigma * (y - x);
            self.r[m] = sigma * x + rho * w * y + rho * owner_y[m] - (self.p[m] + self.s[m]);
            self.y[m] = self.r[m] / c;
            self.x[m] = (self.s[m] / sigma + self.y[m]).max(0.0);
        }
    }
}

/// Both vehicles of a pair hold a separation row against each other's
/// nominal and move in the same pass, so each row claims only part of the
/// linearised margin; the two parts sum to one, which keeps the pair apart
/// even when both move. The split is uneven so that a symmetric encounter
/// still has one vehicle yielding more than the other.
fn margin_share(own: VehicleId, other: VehicleId) -> f64 {
    const LOWER_ID_SHARE: f64 = 0.3;
    if own < other {
        LOWER_ID_SHARE
    } else {
        1.0 - LOWER_ID_SHARE
    }
}

struct Agent {
    id: VehicleId,
    neighbors: Vec<VehicleId>,
    z0: VehicleState,
    reference: Vec<VehicleState>,
    controls: Vec<ControlInput>,
    states: Vec<VehicleState>,
    problem: Option<LocalProblem>,
    factor: Option<LqrFactor>,
    boxes: Block,
    own: Block,
    copies: BTreeMap<VehicleId, Block>,
    replicas: BTreeMap<VehicleId, Block>,
    dx: Perturbation,
}

/// Inputs for one subgraph member.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberInput {
    pub z0: VehicleState,
    pub reference: Vec<VehicleState>,
    /// Initial nominal controls.
    pub controls: Vec<ControlInput>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerDiagnostics {
    pub outer: usize,
    pub inner: usize,
    /// `max ‖copy_i[j].y − own_j.y‖∞` over neighbor pairs.
    pub consensus_residual: f64,
    /// Largest difference between an owner's replica and the neighbor's copy.
    pub mirror_gap: f64,
    /// Largest violation of a linearised row, `max(JΔX − k)`.
    pub row_violation: f64,
    /// Smallest entry of any projected `x` block.
    pub min_dual_x: f64,
    /// Minimum pairwise distance of the linearised prediction.
    pub min_distance: f64,
    /// Tracking plus control cost of the linearised prediction.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdmmReport {
    pub outer_passes: usize,
    pub diagnostics: Vec<InnerDiagnostics>,
    /// Outer loop stopped on the trajectory-change tolerance.
    pub converged: bool,
    pub last_change: f64,
    /// Minimum pairwise distance of the returned trajectories.
    pub min_distance: f64,
    /// Returned trajectories keep every pair at least `2 r_safe` apart.
    pub safe: bool,
    pub regularization: Option<f64>,
    pub max_kkt_residual: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphSolution {
    pub trajectories: BTreeMap<VehicleId, Trajectory>,
    pub report: AdmmReport,
}

/// Rolls `controls` forward, raising any deceleration that would make the
/// speed negative. Returns the states and the controls actually applied.
pub fn rollout_forward_only(
    z0: &VehicleState,
    controls: &[ControlInput],
    params: &PlannerParams,
) -> Option<(Vec<VehicleState>, Vec<ControlInput>)> {
    let dt = params.kinematics.dt;
    let mut z = *z0;
    let mut states = vec![z];
    let mut applied = Vec::with_capacity(controls.len());
    for u in controls {
        let mut u = params.bounds.clamp(*u);
        if z.v + dt * u.accel < 0.0 {
            u.accel = -z.v / dt;
        }
        z = step(&z, &u, &params.kinematics).ok()?;
        if z.v < 0.0 {
            z.v = 0.0;
        }
        states.push(z);
        applied.push(u);
    }
    Some((states, applied))
}

fn min_pairwise(trajs: &BTreeMap<VehicleId, Vec<[f64; 2]>>, subgraph: &Subgraph) -> f64 {
    let mut best = f64::INFINITY;
    for &(a, b) in &all_pairs(&subgraph.members) {
        for (pa, pb) in trajs[&a].iter().zip(&trajs[&b]) {
            best = best.min(distance(*pa, *pb));
        }
    }
    best
}

fn all_pairs(ids: &[VehicleId]) -> Vec<(VehicleId, VehicleId)> {
    let mut out = Vec::new();
    for (k, a) in ids.iter().enumerate() {
        for b in &ids[k + 1..] {
            out.push((*a, *b));
        }
    }
    out
}

fn tracking_cost(problem: &LocalProblem, dx: &Perturbation) -> f64 {
    let mut c = 0.0;
    for (tau, z) in problem.nominal_states.iter().enumerate() {
        let zr = &problem.reference[tau];
        let d = dx.states[tau];
        let e = [z.x + d[0] - zr.x, z.y + d[1] - zr.y, wrap_angle(z.heading + d[2] - zr.heading), z.v + d[3] - zr.v];
        c += e.iter().zip(problem.q.iter()).map(|(e, q)| q * e * e).sum::<f64>();
    }
    for (u, d) in problem.nominal_controls.iter().zip(&dx.controls) {
        let v = [u.accel + d[0], u.steer + d[1]];
        c += v.iter().zip(problem.r.iter()).map(|(v, r)| r * v * v).sum::<f64>();
    }
    c
}

/// Runs the outer re-linearisation loop and the inner dual iterations for
/// one subgraph. Members missing from `inputs` are a caller error.
pub fn admm_solve(subgraph: &Subgraph, inputs: &BTreeMap<VehicleId, MemberInput>, params: &PlannerParams) -> SubgraphSolution {
    let t = params.horizon;
    let (rho, sigma) = (params.rho, params.sigma);
    let mut report = AdmmReport { min_distance: f64::INFINITY, ..Default::default() };

    let mut agents: BTreeMap<VehicleId, Agent> = BTreeMap::new();
    for &id in &subgraph.members {
        let input = &inputs[&id];
        assert_eq!(input.controls.len(), t, "initial controls must cover the horizon");
        let (states, controls) = rollout_forward_only(&input.z0, &input.controls, params)
            .unwrap_or_else(|| (vec![input.z0; t + 1], vec![ControlInput::new(0.0, 0.0); t]));
        let neighbors = if params.collision_rows { subgraph.neighbors(id) } else { Vec::new() };
        agents.insert(
            id,
            Agent {
                id,
                neighbors,
                z0: input.z0,
                reference: input.reference.clone(),
                controls,
                states,
                problem: None,
                factor: None,
                boxes: Block::zeros(4 * t),
                own: Block::default(),
                copies: BTreeMap::new(),
                replicas: BTreeMap::new(),
                dx: Perturbation::zeros(t),
            },
        );
    }
    let degree: BTreeMap<VehicleId, usize> = agents.iter().map(|(id, a)| (*id, a.neighbors.len())).collect();
    for agent in agents.values_mut() {
        agent.own = Block::zeros(agent.neighbors.len() * t);
        for &j in &agent.neighbors {
            agent.copies.insert(j, Block::zeros(degree[&j] * t));
            agent.replicas.insert(j, Block::zeros(agent.neighbors.len() * t));
        }
    }

    for outer in 0..params.max_outer {
        report.outer_passes = outer + 1;
        // Exchange nominal trajectories and re-linearise.
        let nominal: BTreeMap<VehicleId, Vec<VehicleState>> = agents.iter().map(|(id, a)| (*id, a.states.clone())).collect();
        for agent in agents.values_mut() {
            let neigh: Vec<(VehicleId, Vec<VehicleState>)> =
                agent.neighbors.iter().map(|j| (*j, nominal[j].clone())).collect();
            let problem = build_local_problem(agent.id, &agent.z0, &agent.reference, &agent.controls, &neigh, params)
                .expect("nominal controls come from an admissible rollout");
            let factor = LqrFactor::new(&problem, penalty_weight(rho, sigma, agent.neighbors.len()));
            if let Some(s) = factor.regularization {
                report.regularization = Some(report.regularization.map_or(s, |r: f64| r.max(s)));
            }
            agent.problem = Some(problem);
            agent.factor = Some(factor);
            agent.boxes.reset_multipliers();
            agent.own.reset_all();
            agent.copies.values_mut().for_each(Block::reset_all);
            agent.replicas.values_mut().for_each(Block::reset_all);
            agent.dx = Perturbation::zeros(t);
        }

        for inner in 0..params.max_inner {
            // Messages of iteration k.
            let own_y: BTreeMap<VehicleId, Vec<f64>> = agents.iter().map(|(id, a)| (*id, a.own.y.clone())).collect();
            for agent in agents.values_mut() {
                let deg = agent.neighbors.len();
                let c = sigma + 2.0 * rho * deg as f64;
                let problem = agent.problem.as_ref().expect("built above");

                // Own separation block, consensus via the replicas.
                let own = &mut agent.own;
                for m in 0..own.y.len() {
                    let (y, x) = (own.y[m], own.x[m]);
                    let (mut diff, mut sum) = (0.0, 0.0);
                    for rep in agent.replicas.values() {
                        diff += y - rep.y[m];
                        sum += y + rep.y[m];
                    }
                    own.p[m] += rho * diff;
                    own.s[m] += sigma * (y - x);
                    let share = margin_share(agent.id, problem.neighbors[m / t]);
                    own.r[m] = sigma * x + rho * sum - (share * problem.k[problem.n_box + m] + own.p[m] + own.s[m]);
                }
                // Private box block.
                let bx = &mut agent.boxes;
                for m in 0..bx.y.len() {
                    let (y, x) = (bx.y[m], bx.x[m]);
                    bx.s[m] += sigma * (y - x);
                    bx.r[m] = sigma * x + 2.0 * rho * deg as f64 * y - (problem.k[m] + bx.s[m]);
                }
                // Copies of neighbors' blocks.
                for (j, copy) in agent.copies.iter_mut() {
                    copy.advance_copy(&own_y[j], deg, rho, sigma);
                }
                // Primal step.
                let r: Vec<f64> = agent.boxes.r.iter().chain(&agent.own.r).copied().collect();
                let factor = agent.factor.as_ref().expect("built above");
                agent.dx = factor.solve(problem, &r);
                let jdx = problem.apply_rows(&agent.dx);
                let (jb, jo) = jdx.split_at(problem.n_box);
                for (blk, j) in [(&mut agent.boxes, jb), (&mut agent.own, jo)] {
                    for m in 0..blk.y.len() {
                        blk.y[m] = (j[m] + blk.r[m]) / c;
                        blk.x[m] = (blk.s[m] / sigma + blk.y[m]).max(0.0);
                    }
                }
                // Replicas of what each neighbor does with this vehicle's block.
                let mine = &own_y[&agent.id];
                for (v, rep) in agent.replicas.iter_mut() {
                    rep.advance_copy(mine, degree[v], rho, sigma);
                }
            }
            report.diagnostics.push(diagnose(&agents, subgraph, outer, inner));
        }

        // Nominal update through the nonlinear model.
        let mut change: f64 = 0.0;
        for agent in agents.values_mut() {
            let problem = agent.problem.as_ref().expect("built above");
            let factor = agent.factor.as_ref().expect("built above");
            let r: Vec<f64> = agent.boxes.r.iter().chain(&agent.own.r).copied().collect();
            report.max_kkt_residual = report.max_kkt_residual.max(factor.kkt_residual(problem, &r, &agent.dx));
            let proposed = problem.perturbed_controls(&agent.dx, params);
            match rollout_forward_only(&agent.z0, &proposed, params) {
                Some((states, controls)) => {
                    for (a, b) in states.iter().zip(&agent.states) {
                        change = change.max(distance(a.position(), b.position()));
                    }
                    agent.states = states;
                    agent.controls = controls;
                }
                None => report.warnings.push(format!("vehicle {}: update left the model domain; kept previous plan", agent.id)),
            }
        }
        report.last_change = change;
        if change < params.outer_tolerance {
            report.converged = true;
            break;
        }
    }

    let positions: BTreeMap<VehicleId, Vec<[f64; 2]>> =
        agents.iter().map(|(id, a)| (*id, a.states.iter().map(|s| s.position()).collect())).collect();
    report.min_distance = min_pairwise(&positions, subgraph);
    report.safe = report.min_distance >= 2.0 * params.r_safe;
    if !report.converged {
        report.warnings.push(format!("outer loop stopped after {} passes (last change {:.3e} m)", report.outer_passes, report.last_change));
    }
    if !report.safe && subgraph.members.len() > 1 {
        report.warnings.push(format!("planned separation {:.3} m is below {:.3} m", report.min_distance, 2.0 * params.r_safe));
    }
    let trajectories = agents
        .into_iter()
        .map(|(id, a)| (id, Trajectory { states: a.states, controls: a.controls }))
        .collect();
    SubgraphSolution { trajectories, report }
}

fn diagnose(agents: &BTreeMap<VehicleId, Agent>, subgraph: &Subgraph, outer: usize, inner: usize) -> InnerDiagnostics {
    let mut consensus_residual: f64 = 0.0;
    let mut mirror_gap: f64 = 0.0;
    let mut row_violation = f64::NEG_INFINITY;
    let mut min_dual_x = f64::INFINITY;
    let mut cost = 0.0;
    let mut predicted = BTreeMap::new();
    for (id, a) in agents {
        for (j, copy) in &a.copies {
            let owner = &agents[j].own;
            for (u, v) in copy.y.iter().zip(&owner.y) {
                consensus_residual = consensus_residual.max((u - v).abs());
            }
            mirror_gap = mirror_gap.max(copy.max_diff(&agents[j].replicas[id]));
        }
        for blk in std::iter::once(&a.boxes).chain(std::iter::once(&a.own)).chain(a.copies.values()) {
            min_dual_x = blk.x.iter().copied().fold(min_dual_x, f64::min);
        }
        let problem = a.problem.as_ref().expect("built");
        for (m, (jx, k)) in problem.apply_rows(&a.dx).iter().zip(&problem.k).enumerate() {
            let bound = match m.checked_sub(problem.n_box) {
                Some(row) => margin_share(*id, problem.neighbors[row / problem.horizon]) * k,
                None => *k,
            };
            row_violation = row_violation.max(jx - bound);
        }
        cost += tracking_cost(problem, &a.dx);
        let pos: Vec<[f64; 2]> = problem
            .nominal_states
            .iter()
            .zip(&a.dx.states)
            .map(|(z, d)| [z.x + d[0], z.y + d[1]])
            .collect();
        predicted.insert(*id, pos);
    }
    InnerDiagnostics {
        outer,
        inner,
        consensus_residual,
        mirror_gap,
        row_violation,
        min_dual_x,
        min_distance: min_pairwise(&predicted, subgraph),
        cost,
    }
}
