//! Forward–backward sweep for the maximum-principle control on one path.
//!
//! Each iteration simulates the state under the current control, integrates
//! the costates backwards, evaluates the clamped stationarity formula and
//! relaxes the control towards it:
//!
//! ```text
//! u ← λ₁·u + λ₂·clamp₀¹( S (p₁ − p₅ − λ c) / (2 w₂) )
//! ```
//!
//! The Brownian path is held fixed across iterations, so a sweep is a
//! deterministic function of its seed.

use serde::Serialize;

use crate::adjoint::{solve_backward, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::forward::{simulate, BrownianPath, ControlPath, StateTrajectory, TimeGrid};
use crate::model::{CostWeights, ModelParams, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    /// Weight on the previous control.
    pub lambda1: f64,
    /// Weight on the freshly computed candidate.
    pub lambda2: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Constant initial control guess.
    pub u_init: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.9,
            lambda2: 0.1,
            tol_rel: 1e-4,
            max_iters: 500,
            u_init: 0.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("relax_old", self.lambda1), ("relax_new", self.lambda2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if (self.lambda1 + self.lambda2 - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "relax_new",
                format!("relax_old + relax_new must equal 1, got {}", self.lambda1 + self.lambda2),
            ));
        }
        if !(self.tol_rel > 0.0 && self.tol_rel.is_finite()) {
            return Err(Error::config("tol_rel", format!("must be > 0, got {}", self.tol_rel)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.u_init) {
            return Err(Error::config("u_init", format!("must lie in [0, 1], got {}", self.u_init)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Control that generated `xtraj` and `adjtraj`.
    pub control: ControlPath,
    pub xtraj: StateTrajectory,
    pub adjtraj: AdjointTrajectory,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Pathwise running cost of `control`.
    pub cost: f64,
    /// Residual after every iteration from the second on.
    pub residuals: Vec<f64>,
}

/// Clamped stationarity formula `clamp₀¹(s (p₁ − p₅ − λ c) / (2 w₂))`.
pub fn candidate_control(s: f64, p1: f64, p5: f64, w2: f64, lambda_mult: f64, cost_rate: f64) -> f64 {
    let raw = s * (p1 - p5 - lambda_mult * cost_rate) / (2.0 * w2);
    raw.clamp(0.0, 1.0)
}

fn trapezoid(values: impl Iterator<Item = f64>, n: usize, dt: f64) -> f64 {
    let mut sum = 0.0;
    for (k, v) in values.enumerate() {
        let weight = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
        sum += weight * v;
    }
    sum * dt
}

/// Trapezoidal quadrature on `grid` of samples at every grid point.
pub fn integrate(samples: &[f64], grid: &TimeGrid) -> f64 {
    trapezoid(samples.iter().copied(), samples.len(), grid.dt())
}

/// Pathwise running cost `∫ w1 I + w2 u² dt`.
pub fn performance(
    xtraj: &StateTrajectory,
    u: &ControlPath,
    weights: &CostWeights,
    grid: &TimeGrid,
) -> f64 {
    let n = xtraj.states.len();
    let integrand = xtraj
        .states
        .iter()
        .zip(u.values())
        .map(|(x, &uk)| weights.w1 * x.i + weights.w2 * uk * uk);
    trapezoid(integrand, n, grid.dt())
}

fn sup_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff = sup_norm(new.iter().zip(old).map(|(a, b)| a - b));
    diff / (sup_norm(new.iter().copied()) + 1e-12)
}

/// Largest relative sup-norm change over S..E, p₁..p₅, q₁..q₅ and the control.
fn sweep_residual(
    x_new: &StateTrajectory,
    x_old: &StateTrajectory,
    a_new: &AdjointTrajectory,
    a_old: &AdjointTrajectory,
    u_new: &[f64],
    u_old: &[f64],
) -> f64 {
    let mut r = relative_change(u_new, u_old);
    for k in 0..5 {
        r = r.max(relative_change(&x_new.column(k), &x_old.column(k)));
        r = r.max(relative_change(&a_new.p_column(k), &a_old.p_column(k)));
        r = r.max(relative_change(&a_new.q_column(k), &a_old.q_column(k)));
    }
    r
}

fn candidate_path(
    xtraj: &StateTrajectory,
    adj: &AdjointTrajectory,
    w2: f64,
    lambda_mult: f64,
    cost: &[f64],
) -> Vec<f64> {
    xtraj
        .states
        .iter()
        .zip(&adj.states)
        .zip(cost)
        .map(|((x, a), &c)| candidate_control(x.s, a.p[0], a.p[4], w2, lambda_mult, c))
        .collect()
}

/// Pointwise distance between `result.control` and the stationarity formula
/// evaluated on its own trajectories.
pub fn fixed_point_gap(result: &SweepResult, weights: &CostWeights, lambda_mult: f64, cost: &[f64]) -> f64 {
    let target = candidate_path(&result.xtraj, &result.adjtraj, weights.w2, lambda_mult, cost);
    sup_norm(target.iter().zip(result.control.values()).map(|(a, b)| a - b))
}

#[allow(clippy::too_many_arguments)]
pub fn run_sweep(
    x0: &StateVector,
    grid: &TimeGrid,
    params: &ModelParams,
    weights: &CostWeights,
    w: &BrownianPath,
    cfg: &SweepConfig,
    lambda_mult: f64,
    cost: &[f64],
) -> Result<SweepResult> {
    cfg.validate()?;
    if !(lambda_mult >= 0.0 && lambda_mult.is_finite()) {
        return Err(Error::config("lambda", format!("multiplier must be finite and >= 0, got {lambda_mult}")));
    }
    let mut u = ControlPath::constant(cfg.u_init, grid)?;
    let mut prev: Option<(StateTrajectory, AdjointTrajectory)> = None;
    let mut residuals = Vec::new();

    for iter in 1..=cfg.max_iters {
        let xtraj = simulate(&u, w, x0, grid, params)?;
        let adj = solve_backward(&xtraj, &u, grid, weights, lambda_mult, cost, params)?;
        let target = candidate_path(&xtraj, &adj, weights.w2, lambda_mult, cost);
        let next: Vec<f64> = u
            .values()
            .iter()
            .zip(&target)
            .map(|(&old, &new)| (cfg.lambda1 * old + cfg.lambda2 * new).clamp(0.0, 1.0))
            .collect();

        let residual = match &prev {
            Some((x_old, a_old)) => {
                sweep_residual(&xtraj, x_old, &adj, a_old, &next, u.values())
            }
            None => f64::INFINITY,
        };
        if prev.is_some() {
            residuals.push(residual);
        }

        let done = residual < cfg.tol_rel;
        if done || iter == cfg.max_iters {
            let cost_value = performance(&xtraj, &u, weights, grid);
            return Ok(SweepResult {
                control: u,
                xtraj,
                adjtraj: adj,
                iterations: iter,
                final_residual: residual,
                converged: done,
                cost: cost_value,
                residuals,
            });
        }
        prev = Some((xtraj, adj));
        u = ControlPath::from_clamped(next);
    }
    unreachable!("max_iters >= 1 is validated")
}
