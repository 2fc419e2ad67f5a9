//! The linearised per-vehicle problem around a nominal trajectory.
//!
//! The decision vector stacks `[Δz_0, Δu_0, Δz_1, Δu_1, …, Δu_{T-1}, Δz_T]`
//! (length `6T + 4`). Inequality rows have the form `J ΔX − k ≤ 0`.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Vector2, Vector4};

use super::PlannerParams;
use crate::dynamics::{linearize, rollout, ControlInput, RolloutError, VehicleState};
use crate::fleet::VehicleId;
use crate::geometry::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowTarget {
    State(Vector4<f64>),
    Control(Vector2<f64>),
}

/// One inequality row touching a single stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRow {
    pub stage: usize,
    pub target: RowTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalProblem {
    pub horizon: usize,
    pub nominal_states: Vec<VehicleState>,
    pub nominal_controls: Vec<ControlInput>,
    pub reference: Vec<VehicleState>,
    pub a: Vec<Matrix4<f64>>,
    pub b: Vec<Matrix4x2<f64>>,
    pub q: Vector4<f64>,
    pub r: Vector2<f64>,
    /// Cost gradient at the nominal, per stage.
    pub grad_state: Vec<Vector4<f64>>,
    pub grad_control: Vec<Vector2<f64>>,
    /// Box rows first (four per stage), then separation rows grouped by neighbor.
    pub rows: Vec<CouplingRow>,
    pub k: Vec<f64>,
    pub n_box: usize,
    /// Neighbor order of the separation row groups (`horizon` rows each).
    pub neighbors: Vec<VehicleId>,
}

/// A perturbation split by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub states: Vec<Vector4<f64>>,
    pub controls: Vec<Vector2<f64>>,
}

impl Perturbation {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            states: vec![Vector4::zeros(); horizon + 1],
            controls: vec![Vector2::zeros(); horizon],
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let t = self.controls.len();
        let mut v = DVector::zeros(6 * t + 4);
        for tau in 0..=t {
            v.fixed_rows_mut::<4>(6 * tau).copy_from(&self.states[tau]);
            if tau < t {
                v.fixed_rows_mut::<2>(6 * tau + 4).copy_from(&self.controls[tau]);
            }
        }
        v
    }

    pub fn from_flat(v: &DVector<f64>) -> Self {
        let t = (v.len() - 4) / 6;
        Self {
            states: (0..=t).map(|tau| v.fixed_rows::<4>(6 * tau).into_owned()).collect(),
            controls: (0..t).map(|tau| v.fixed_rows::<2>(6 * tau + 4).into_owned()).collect(),
        }
    }
}

impl LocalProblem {
    pub fn dim(&self) -> usize {
        6 * self.horizon + 4
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// `J ΔX`.
    pub fn apply_rows(&self, dx: &Perturbation) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| match row.target {
                RowTarget::State(c) => c.dot(&dx.states[row.stage]),
                RowTarget::Control(c) => c.dot(&dx.controls[row.stage]),
            })
            .collect()
    }

    /// Dense `J`.
    pub fn rows_dense(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.rows.len(), self.dim());
        for (i, row) in self.rows.iter().enumerate() {
            match row.target {
                RowTarget::State(c) => j.view_mut((i, 6 * row.stage), (1, 4)).copy_from(&c.transpose()),
                RowTarget::Control(c) => j.view_mut((i, 6 * row.stage + 4), (1, 2)).copy_from(&c.transpose()),
            }
        }
        j
    }

    /// Dense cost Hessian (block diagonal `2Q`, `2R`).
    pub fn hessian_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for tau in 0..=self.horizon {
            for k in 0..4 {
                h[(6 * tau + k, 6 * tau + k)] = 2.0 * self.q[k];
            }
            if tau < self.horizon {
                for k in 0..2 {
                    h[(6 * tau + 4 + k, 6 * tau + 4 + k)] = 2.0 * self.r[k];
                }
            }
        }
        h
    }

    pub fn gradient_dense(&self) -> DVector<f64> {
        Perturbation {
            states: self.grad_state.clone(),
            controls: self.grad_control.clone(),
        }
        .to_flat()
    }

    /// Dense equality constraints: `Δz_0 = 0` and `Δz_{τ+1} = A Δz_τ + B Δu_τ`.
    pub fn dynamics_dense(&self) -> DMatrix<f64> {
        let t = self.horizon;
        let mut e = DMatrix::zeros(4 * (t + 1), self.dim());
        for k in 0..4 {
            e[(k, k)] = 1.0;
        }
        for tau in 0..t {
            let r0 = 4 * (tau + 1);
            e.view_mut((r0, 6 * tau), (4, 4)).copy_from(&(-self.a[tau]));
            e.view_mut((r0, 6 * tau + 4), (4, 2)).copy_from(&(-self.b[tau]));
            for k in 0..4 {
                e[(r0 + k, 6 * (tau + 1) + k)] = 1.0;
            }
        }
        e
    }

    /// Nominal plus perturbation, with controls clamped to the box.
    pub fn perturbed_controls(&self, dx: &Perturbation, params: &PlannerParams) -> Vec<ControlInput> {
        self.nominal_controls
            .iter()
            .zip(&dx.controls)
            .map(|(u, d)| params.bounds.clamp(ControlInput::new(u.accel + d[0], u.steer + d[1])))
            .collect()
    }
}

/// Unit vector from `other` to `own`; coincident points use the
/// difference of heading directions instead.
fn separation_direction(own: &VehicleState, other: &VehicleState, own_id: VehicleId, other_id: VehicleId) -> (Vector2<f64>, f64) {
    let d = Vector2::new(own.x - other.x, own.y - other.y);
    let n = d.norm();
    if n > 1e-9 {
        return (d / n, n);
    }
    log::warn!("vehicles {own_id} and {other_id} coincide; separating along relative heading");
    let h = Vector2::new(own.heading.cos() - other.heading.cos(), own.heading.sin() - other.heading.sin());
    let dir = if h.norm() > 1e-9 {
        h.normalize()
    } else {
        // Same heading: split sideways, the smaller id to the left.
        let left = Vector2::new(-own.heading.sin(), own.heading.cos());
        if own_id < other_id {
            left
        } else {
            -left
        }
    };
    (dir, n)
}

/// Linearises vehicle `own_id` around the rollout of `controls` from `z0`.
///
/// `neighbors` gives each neighbor's nominal states over the same horizon;
/// they are held fixed in this vehicle's separation rows.
pub fn build_local_problem(
    own_id: VehicleId,
    z0: &VehicleState,
    reference: &[VehicleState],
    controls: &[ControlInput],
    neighbors: &[(VehicleId, Vec<VehicleState>)],
    params: &PlannerParams,
) -> Result<LocalProblem, RolloutError> {
    let t = controls.len();
    assert_eq!(reference.len(), t + 1, "reference must cover the horizon");
    let states = rollout(z0, controls, &params.kinematics)?;
    let mut a = Vec::with_capacity(t);
    let mut b = Vec::with_capacity(t);
    for (index, (z, u)) in states.iter().zip(controls).enumerate() {
        let (ai, bi) = linearize(z, u, &params.kinematics).map_err(|source| RolloutError { index, source })?;
        a.push(ai);
        b.push(bi);
    }
    let q = Vector4::from(params.q);
    let r = Vector2::from(params.r);
    let grad_state = states
        .iter()
        .zip(reference)
        .map(|(z, zr)| {
            let e = Vector4::new(z.x - zr.x, z.y - zr.y, wrap_angle(z.heading - zr.heading), z.v - zr.v);
            2.0 * q.component_mul(&e)
        })
        .collect();
    let grad_control = controls.iter().map(|u| 2.0 * r.component_mul(&u.to_vector())).collect();

    let mut rows = Vec::new();
    let mut k = Vec::new();
    let bounds = &params.bounds;
    for (stage, u) in controls.iter().enumerate() {
        for (coeffs, slack) in [
            (Vector2::new(1.0, 0.0), bounds.accel_max - u.accel),
            (Vector2::new(-1.0, 0.0), u.accel - bounds.accel_min),
            (Vector2::new(0.0, 1.0), bounds.steer_max - u.steer),
            (Vector2::new(0.0, -1.0), u.steer - bounds.steer_min),
        ] {
            rows.push(CouplingRow { stage, target: RowTarget::Control(coeffs) });
            k.push(slack);
        }
    }
    let n_box = rows.len();
    let mut neighbor_ids = Vec::new();
    if params.collision_rows {
        for (other_id, other) in neighbors {
            assert_eq!(other.len(), t + 1, "neighbor trajectory must cover the horizon");
            neighbor_ids.push(*other_id);
            for stage in 1..=t {
                let (n, d) = separation_direction(&states[stage], &other[stage], own_id, *other_id);
                // d(Δp) ≈ d + nᵀΔp ≥ 2 r_safe + margin
                rows.push(CouplingRow { stage, target: RowTarget::State(Vector4::new(-n[0], -n[1], 0.0, 0.0)) });
                k.push(d - 2.0 * params.r_safe - params.separation_margin);
            }
        }
    }
    Ok(LocalProblem {
        horizon: t,
        nominal_states: states,
        nominal_controls: controls.to_vec(),
        reference: reference.to_vec(),
        a,
        b,
        q,
        r,
        grad_state,
        grad_control,
        rows,
        k,
        n_box,
        neighbors: neighbor_ids,
    })
}
