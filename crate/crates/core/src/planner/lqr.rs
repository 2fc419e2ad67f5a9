//! Riccati solution of the per-vehicle equality-constrained quadratic
//! program
//!
//! ```text
//! min ½ ΔXᵀ L2 ΔX + L1ᵀ ΔX + γ ‖J ΔX + r‖²   s.t. linear dynamics, Δz_0 = 0
//! ```
//!
//! with `γ = 1 / (2 (σ + 2ρ·deg))`. Every row of `J` touches one stage, so
//! the penalty keeps the stage costs block diagonal and a standard
//! backward/forward sweep applies. The factorisation depends only on `J`
//! and `γ`, so it is reused across dual iterations.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use super::problem::{LocalProblem, Perturbation, RowTarget};

/// Penalty weight for the given ADMM constants and vehicle degree.
pub fn penalty_weight(rho: f64, sigma: f64, degree: usize) -> f64 {
    1.0 / (2.0 * (sigma + 2.0 * rho * degree as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrFactor {
    gamma: f64,
    hz: Vec<Matrix4<f64>>,
    hu: Vec<Matrix2<f64>>,
    gain: Vec<Matrix2x4<f64>>,
    qux: Vec<Matrix2x4<f64>>,
    quu_inv: Vec<Matrix2<f64>>,
    /// Largest Levenberg shift needed to make a control Hessian positive definite.
    pub regularization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub dx: Perturbation,
    pub regularization: Option<f64>,
}

impl LqrFactor {
    pub fn new(problem: &LocalProblem, gamma: f64) -> Self {
        let t = problem.horizon;
        let mut hz: Vec<Matrix4<f64>> = (0..=t).map(|_| Matrix4::from_diagonal(&(2.0 * problem.q))).collect();
        let mut hu: Vec<Matrix2<f64>> = (0..t).map(|_| Matrix2::from_diagonal(&(2.0 * problem.r))).collect();
        for row in &problem.rows {
            match row.target {
                RowTarget::State(c) => hz[row.stage] += 2.0 * gamma * c * c.transpose(),
                RowTarget::Control(c) => hu[row.stage] += 2.0 * gamma * c * c.transpose(),
            }
        }
        let mut gain = vec![Matrix2x4::zeros(); t];
        let mut qux = vec![Matrix2x4::zeros(); t];
        let mut quu_inv = vec![Matrix2::zeros(); t];
        let mut regularization: Option<f64> = None;
        let mut p = hz[t];
        for tau in (0..t).rev() {
            let (a, b) = (&problem.a[tau], &problem.b[tau]);
            let pb = p * b;
            let quu = hu[tau] + b.transpose() * pb;
            let qux_t = pb.transpose() * a;
            let qxx = hz[tau] + a.transpose() * p * a;
            let mut shift = 0.0;
            let chol = loop {
                match (quu + Matrix2::identity() * shift).cholesky() {
                    Some(c) => break c,
                    None => {
                        shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
                    }
                }
            };
            if shift > 0.0 {
                regularization = Some(regularization.map_or(shift, |s: f64| s.max(shift)));
            }
            let inv = chol.inverse();
            let k = -inv * qux_t;
            p = qxx + qux_t.transpose() * k;
            p = 0.5 * (p + p.transpose());
            gain[tau] = k;
            qux[tau] = qux_t;
            quu_inv[tau] = inv;
        }
        if let Some(s) = regularization {
            log::warn!("control Hessian regularised with shift {s:e}");
        }
        Self { gamma, hz, hu, gain, qux, quu_inv, regularization }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Stage-wise linear terms `L1 + 2γ Jᵀ r`.
    fn linear_terms(&self, problem: &LocalProblem, r: &[f64]) -> (Vec<Vector4<f64>>, Vec<Vector2<f64>>) {
        assert_eq!(r.len(), problem.rows.len(), "one dual entry per row");
        let mut gz = problem.grad_state.clone();
        let mut gu = problem.grad_control.clone();
        for (row, ri) in problem.rows.iter().zip(r) {
            match row.target {
                RowTarget::State(c) => gz[row.stage] += 2.0 * self.gamma * ri * c,
                RowTarget::Control(c) => gu[row.stage] += 2.0 * self.gamma * ri * c,
            }
        }
        (gz, gu)
    }

    pub fn solve(&self, problem: &LocalProblem, r: &[f64]) -> Perturbation {
        let t = problem.horizon;
        let (gz, gu) = self.linear_terms(problem, r);
        let mut ff = vec![Vector2::zeros(); t];
        let mut p = gz[t];
        for tau in (0..t).rev() {
            let qu = gu[tau] + problem.b[tau].transpose() * p;
            let k = -self.quu_inv[tau] * qu;
            p = gz[tau] + problem.a[tau].transpose() * p + self.qux[tau].transpose() * k;
            ff[tau] = k;
        }
        let mut dx = Perturbation::zeros(t);
        for tau in 0..t {
            let u = self.gain[tau] * dx.states[tau] + ff[tau];
            dx.controls[tau] = u;
            dx.states[tau + 1] = problem.a[tau] * dx.states[tau] + problem.b[tau] * u;
        }
        dx
    }

    /// Largest violation of the first-order optimality conditions and of the
    /// constraints at `dx`, with multipliers recovered from the state
    /// stationarity conditions.
    pub fn kkt_residual(&self, problem: &LocalProblem, r: &[f64], dx: &Perturbation) -> f64 {
        let t = problem.horizon;
        let (gz, gu) = self.linear_terms(problem, r);
        let mut worst = dx.states[0].amax();
        let mut lambda = -(self.hz[t] * dx.states[t] + gz[t]);
        for tau in (0..t).rev() {
            let (a, b) = (&problem.a[tau], &problem.b[tau]);
            let du = self.hu[tau] * dx.controls[tau] + gu[tau] - b.transpose() * lambda;
            let dyn_res = dx.states[tau + 1] - a * dx.states[tau] - b * dx.controls[tau];
            worst = worst.max(du.amax()).max(dyn_res.amax());
            lambda = a.transpose() * lambda - (self.hz[tau] * dx.states[tau] + gz[tau]);
        }
        worst
    }
}

/// Solves the penalised problem for one dual vector `r`.
pub fn lqr_solve(problem: &LocalProblem, r: &[f64], rho: f64, sigma: f64, degree: usize) -> LqrSolution {
    let factor = LqrFactor::new(problem, penalty_weight(rho, sigma, degree));
    LqrSolution {
        dx: factor.solve(problem, r),
        regularization: factor.regularization,
    }
}

pub fn kkt_residual(problem: &LocalProblem, r: &[f64], rho: f64, sigma: f64, degree: usize, dx: &Perturbation) -> f64 {
    LqrFactor::new(problem, penalty_weight(rho, sigma, degree)).kkt_residual(problem, r, dx)
}
