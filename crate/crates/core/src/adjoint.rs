//! Hamiltonian of the (optionally budget-penalised) control problem and the
//! backward pass for the costates.
//!
//! The Hamiltonian is
//!
//! ```text
//! H = w1·i + w2·u² + λ·s·u·c + b(x, u)·p + g(x)·q
//! ```
//!
//! and the costates solve `dp = −∇ₓH dt + q dB` with `p(T) = 0`. The backward
//! drift is the analytic gradient of exactly this expression.
//!
//! In the discrete backward pass `q` is held at zero, which reduces the
//! adjoint to a pathwise linear ODE integrated by explicit Euler in reversed
//! time along each frozen forward path.

use crate::error::{Error, Result, Stage};
use crate::forward::{diffusion, drift, ControlPath, StateTrajectory, TimeGrid};
use crate::model::{force_of_infection, CostWeights, ModelParams, StateVector};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdjointState {
    pub p: [f64; 5],
    pub q: [f64; 5],
}

impl AdjointState {
    pub const ZERO: AdjointState = AdjointState {
        p: [0.0; 5],
        q: [0.0; 5],
    };

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(&self.q).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub states: Vec<AdjointState>,
}

impl AdjointTrajectory {
    pub fn p_column(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|a| a.p[k]).collect()
    }

    pub fn q_column(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|a| a.q[k]).collect()
    }
}

fn dot(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    x: &StateVector,
    u: f64,
    adj: &AdjointState,
    w: &CostWeights,
    lambda_mult: f64,
    cost_rate: f64,
    p: &ModelParams,
) -> f64 {
    w.w1 * x.i
        + w.w2 * u * u
        + lambda_mult * x.s * u * cost_rate
        + dot(&drift(x, u, p).to_array(), &adj.p)
        + dot(&diffusion(x, p).to_array(), &adj.q)
}

/// `∂H/∂(s, i, c, a, e)`.
#[allow(clippy::too_many_arguments)]
pub fn grad_hamiltonian_x(
    x: &StateVector,
    u: f64,
    adj: &AdjointState,
    w: &CostWeights,
    lambda_mult: f64,
    cost_rate: f64,
    p: &ModelParams,
) -> [f64; 5] {
    let [p1, p2, p3, p4, p5] = adj.p;
    let [q1, q2, ..] = adj.q;
    let f = force_of_infection(x, p);
    // b1 and b2 carry ∓βFS, g1 and g2 carry ∓σFS; both couple only p1/p2, q1/q2.
    let infection_p = p2 - p1;
    let noise_q = q2 - q1;
    let ds = lambda_mult * u * cost_rate - (p.mu + p.psi + u) * p1
        + (p.psi + u) * p5
        + f * (p.beta * infection_p + p.sigma * noise_q);
    // ∂F/∂i = 1, ∂F/∂c = η_C, ∂F/∂a = η_A, each scaled by s.
    let through_f = x.s * (p.beta * infection_p + p.sigma * noise_q);
    let di = w.w1 + through_f - p.xi3() * p2 + p.phi * p3 + p.rho * p4;
    let dc = p.eta_c * through_f + p.omega * p2 - p.xi2() * p3;
    let da = p.eta_a * through_f + p.alpha * p2 - p.xi1() * p4;
    let de = p.theta * p1 - p.xi4() * p5;
    [ds, di, dc, da, de]
}

/// Backward Euler sweep for the costates along one frozen forward path.
///
/// `cost` holds the budget cost rate `c(t_k)` at every grid point and only
/// enters through `lambda_mult`.
#[allow(clippy::too_many_arguments)]
pub fn solve_backward(
    xtraj: &StateTrajectory,
    u: &ControlPath,
    grid: &TimeGrid,
    weights: &CostWeights,
    lambda_mult: f64,
    cost: &[f64],
    p: &ModelParams,
) -> Result<AdjointTrajectory> {
    let n = grid.n_points();
    for (what, got) in [
        ("state trajectory", xtraj.states.len()),
        ("control path", u.len()),
        ("cost samples", cost.len()),
    ] {
        if got != n {
            return Err(Error::Shape {
                what,
                expected: n,
                got,
            });
        }
    }
    let dt = grid.dt();
    let mut states = vec![AdjointState::ZERO; n];
    for k in (0..grid.n_steps).rev() {
        let next = states[k + 1];
        let grad = grad_hamiltonian_x(
            &xtraj.states[k + 1],
            u.values()[k + 1],
            &next,
            weights,
            lambda_mult,
            cost[k + 1],
            p,
        );
        let cur = AdjointState {
            p: std::array::from_fn(|j| next.p[j] + grad[j] * dt),
            q: [0.0; 5],
        };
        if !cur.is_finite() {
            return Err(Error::NonFinite {
                stage: Stage::Backward,
                step: k,
            });
        }
        states[k] = cur;
    }
    Ok(AdjointTrajectory { states })
}
