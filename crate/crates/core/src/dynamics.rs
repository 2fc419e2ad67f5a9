//! Discrete kinematic bicycle model.
//!
//! The model advances a rear-axle reference point by the chord length
//! `f(v, δ) = b + v·dt·cos δ − sqrt(b² − g²)` along the current heading, where
//! `g = v·dt·sin δ`, then rotates the heading by `asin(g / b)`.

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, v: f64) -> Self {
        Self { x, y, heading, v }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.heading, self.v)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Longitudinal acceleration, m/s².
    pub accel: f64,
    /// Front-wheel steering angle, rad.
    pub steer: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.accel, self.steer)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams {
    pub wheelbase: f64,
    pub dt: f64,
}

impl Default for KinematicParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.8,
            dt: 0.1,
        }
    }
}

/// Box bounds on the control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_min: f64,
    pub steer_max: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            accel_min: -4.0,
            accel_max: 3.0,
            steer_min: -0.6,
            steer_max: 0.6,
        }
    }
}

impl ControlBounds {
    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(
            u.accel.clamp(self.accel_min, self.accel_max),
            u.steer.clamp(self.steer_min, self.steer_max),
        )
    }

    pub fn contains(&self, u: &ControlInput) -> bool {
        u.accel >= self.accel_min
            && u.accel <= self.accel_max
            && u.steer >= self.steer_min
            && u.steer <= self.steer_max
    }
}

/// Vehicle footprint used for rendering and safety margins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub length: f64,
    pub width: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self {
            length: 4.7,
            width: 1.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("kinematic domain violated: |v·dt·sin δ| = {lateral} is not below wheelbase {wheelbase}")]
pub struct KinematicDomainError {
    pub lateral: f64,
    pub wheelbase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("rollout failed at control index {index}: {source}")]
pub struct RolloutError {
    pub index: usize,
    #[source]
    pub source: KinematicDomainError,
}

struct StepTerms {
    g: f64,
    root: f64,
    chord: f64,
}

fn step_terms(v: f64, steer: f64, params: &KinematicParams) -> Result<StepTerms, KinematicDomainError> {
    let b = params.wheelbase;
    let g = v * params.dt * steer.sin();
    if !(g.abs() < b) {
        return Err(KinematicDomainError {
            lateral: g.abs(),
            wheelbase: b,
        });
    }
    let root = (b * b - g * g).sqrt();
    let chord = b + v * params.dt * steer.cos() - root;
    Ok(StepTerms { g, root, chord })
}

/// One step of the discrete model; the heading is renormalised to (-pi, pi].
pub fn step(
    z: &VehicleState,
    u: &ControlInput,
    params: &KinematicParams,
) -> Result<VehicleState, KinematicDomainError> {
    let t = step_terms(z.v, u.steer, params)?;
    Ok(VehicleState {
        x: z.x + t.chord * z.heading.cos(),
        y: z.y + t.chord * z.heading.sin(),
        heading: wrap_angle(z.heading + (t.g / params.wheelbase).asin()),
        v: z.v + params.dt * u.accel,
    })
}

/// States visited by applying `controls` in order; element 0 is `z0`.
pub fn rollout(
    z0: &VehicleState,
    controls: &[ControlInput],
    params: &KinematicParams,
) -> Result<Vec<VehicleState>, RolloutError> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*z0);
    let mut z = *z0;
    for (index, u) in controls.iter().enumerate() {
        z = step(&z, u, params).map_err(|source| RolloutError { index, source })?;
        states.push(z);
    }
    Ok(states)
}

/// Analytic Jacobians `(∂f/∂z, ∂f/∂u)` of [`step`] at `(z, u)`.
///
/// Heading renormalisation is locally the identity and is ignored.
pub fn linearize(
    z: &VehicleState,
    u: &ControlInput,
    params: &KinematicParams,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>), KinematicDomainError> {
    let t = step_terms(z.v, u.steer, params)?;
    let dt = params.dt;
    let (sd, cd) = u.steer.sin_cos();
    let (sh, ch) = z.heading.sin_cos();

    let dg_dv = dt * sd;
    let dg_ds = z.v * dt * cd;
    let df_dv = dt * cd + t.g * dg_dv / t.root;
    let df_ds = -z.v * dt * sd + t.g * dg_ds / t.root;
    let dturn_dv = dg_dv / t.root;
    let dturn_ds = dg_ds / t.root;

    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, -t.chord * sh, df_dv * ch,
        0.0, 1.0,  t.chord * ch, df_dv * sh,
        0.0, 0.0,  1.0,          dturn_dv,
        0.0, 0.0,  0.0,          1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        0.0, df_ds * ch,
        0.0, df_ds * sh,
        0.0, dturn_ds,
        dt,  0.0,
    );
    Ok((a, b))
}
