//! Stochastic optimal control of PrEP uptake in a five-compartment HIV/AIDS
//! model driven by a noisy force of infection.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parameters, state and the force of infection.
//! - [`forward`]: drift, diffusion and the Euler–Maruyama integrator.
//! - [`adjoint`]: Hamiltonian, its state gradient and the costate backward pass.
//! - [`sweep`]: forward–backward sweep to the maximum-principle control.
//! - [`budget`]: Lagrange multipliers for expected (Type I) and pathwise
//!   (Type II) budget caps.
//! - [`montecarlo`]: seeding, batch execution, ensemble statistics and the
//!   strong-order harness.
//! - [`config`] and [`commands`]: scenario files and the `simulate`,
//!   `optimize` and `optimize-budget` pipelines used by the CLI.

pub mod adjoint;
pub mod budget;
pub mod commands;
pub mod config;
pub mod error;
pub mod forward;
pub mod model;
pub mod montecarlo;
pub mod sweep;

pub use error::{Error, Result};
pub use forward::{BrownianPath, ControlPath, StateTrajectory, TimeGrid};
pub use model::{CostWeights, ModelParams, StateVector};
pub use sweep::{SweepConfig, SweepResult};
