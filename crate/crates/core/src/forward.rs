//! Controlled forward dynamics and the Euler–Maruyama integrator.
//!
//! The model is driven by a single scalar Brownian motion that enters only
//! the S and I equations, with opposite signs, through the noisy force of
//! infection. Controls are piecewise constant on `[t_k, t_{k+1})`.
//!
//! The discrete scheme does not inherit the positivity of the continuous
//! solution, so each coordinate is clipped at zero after a step and every
//! clip is counted in [`StateTrajectory::clamp_events`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result, Stage};
use crate::model::{force_of_infection, ModelParams, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::config("n_steps", "must be >= 1"));
        }
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(Error::config("t_end", format!("must be finite and > 0, got {t_end}")));
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points()).map(move |k| self.t(k))
    }
}

/// Brownian increments on a [`TimeGrid`], reproducible from `(seed, stream)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub increments: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
}

impl BrownianPath {
    /// Draws `n_steps` independent `N(0, dt)` increments from ChaCha8 stream
    /// `stream` under key `seed`.
    pub fn generate(seed: u64, stream: u64, grid: &TimeGrid) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let scale = grid.dt().sqrt();
        let increments = (0..grid.n_steps)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Self {
            increments,
            seed,
            stream,
        }
    }

    /// Zero path, for deterministic runs.
    pub fn zero(grid: &TimeGrid) -> Self {
        Self {
            increments: vec![0.0; grid.n_steps],
            seed: 0,
            stream: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Admissible control levels `u(t_k) ∈ [0, 1]`, one per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    values: Vec<f64>,
}

impl ControlPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config("control", format!("level {bad} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn constant(level: f64, grid: &TimeGrid) -> Result<Self> {
        Self::new(vec![level; grid.n_points()])
    }

    /// Builds from values already known to lie in `[0, 1]`.
    pub(crate) fn from_clamped(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub states: Vec<StateVector>,
    /// Number of coordinate-steps clipped back to zero.
    pub clamp_events: usize,
}

impl StateTrajectory {
    pub fn max_total(&self) -> f64 {
        self.states
            .iter()
            .map(StateVector::total)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn terminal(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one point")
    }

    pub fn column(&self, compartment: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[compartment]).collect()
    }
}

/// Drift of the controlled system, individuals/year.
pub fn drift(x: &StateVector, u: f64, p: &ModelParams) -> StateVector {
    let infection = p.beta * force_of_infection(x, p) * x.s;
    StateVector {
        s: p.lambda_recruit - infection - p.mu * x.s - p.psi * x.s - u * x.s + p.theta * x.e,
        i: infection - p.xi3() * x.i + p.alpha * x.a + p.omega * x.c,
        c: p.phi * x.i - p.xi2() * x.c,
        a: p.rho * x.i - p.xi1() * x.a,
        e: p.psi * x.s - p.xi4() * x.e + u * x.s,
    }
}

/// Coefficient of `dB`: `(−σFS, σFS, 0, 0, 0)`.
pub fn diffusion(x: &StateVector, p: &ModelParams) -> StateVector {
    let g = p.sigma * force_of_infection(x, p) * x.s;
    StateVector {
        s: -g,
        i: g,
        ..StateVector::ZERO
    }
}

/// One Euler–Maruyama step for a system driven by a scalar Brownian motion.
pub fn euler_maruyama_step<const D: usize>(
    x: &[f64; D],
    drift: &[f64; D],
    diffusion: &[f64; D],
    dt: f64,
    dw: f64,
) -> [f64; D] {
    std::array::from_fn(|k| x[k] + drift[k] * dt + diffusion[k] * dw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    pub clamped: usize,
}

/// Raised by [`step`] when the update is not finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteStep;

pub fn step(
    x: &StateVector,
    u: f64,
    dw: f64,
    dt: f64,
    p: &ModelParams,
) -> Result<StepOutcome, NonFiniteStep> {
    let raw = euler_maruyama_step(
        &x.to_array(),
        &drift(x, u, p).to_array(),
        &diffusion(x, p).to_array(),
        dt,
        dw,
    );
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(NonFiniteStep);
    }
    let clamped = raw.iter().filter(|&&v| v < 0.0).count();
    Ok(StepOutcome {
        state: StateVector::from_array(raw.map(|v| v.max(0.0))),
        clamped,
    })
}

fn check_lengths(u: &ControlPath, w: &BrownianPath, grid: &TimeGrid) -> Result<()> {
    if u.len() != grid.n_points() {
        return Err(Error::Shape {
            what: "control path",
            expected: grid.n_points(),
            got: u.len(),
        });
    }
    if w.len() != grid.n_steps {
        return Err(Error::Shape {
            what: "Brownian path",
            expected: grid.n_steps,
            got: w.len(),
        });
    }
    Ok(())
}

/// Integrates the controlled SDE over `grid` along the Brownian path `w`.
pub fn simulate(
    u: &ControlPath,
    w: &BrownianPath,
    x0: &StateVector,
    grid: &TimeGrid,
    p: &ModelParams,
) -> Result<StateTrajectory> {
    check_lengths(u, w, grid)?;
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_points());
    states.push(*x0);
    let mut clamp_events = 0;
    let mut x = *x0;
    for (k, (&uk, &dw)) in u.values().iter().zip(&w.increments).enumerate() {
        let out = step(&x, uk, dw, dt, p).map_err(|_| Error::NonFinite {
            stage: Stage::Forward,
            step: k,
        })?;
        clamp_events += out.clamped;
        x = out.state;
        states.push(x);
    }
    Ok(StateTrajectory {
        states,
        clamp_events,
    })
}
