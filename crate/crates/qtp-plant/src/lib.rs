//! Quadruple-tank process plant model.
//!
//! Simulates the nonlinear four-tank dynamics (Torricelli outflows, split pump
//! inflows), produces the two level measurements, and derives the discrete-time
//! linear model used by the controller: analytic linearization around an
//! equilibrium pair followed by exact zero-order-hold discretization.
//!
//! All state transitions are pure functions; determinism is part of the
//! contract (identical inputs and seeds give bitwise-identical trajectories).

mod dynamics;
mod error;
mod linear;
mod params;
mod state;

pub use dynamics::{measure, qtp_derivative, step_nonlinear, SensorNoise};
pub use error::PlantError;
pub use linear::{derive_linear_model, discretize_zoh, linearize, LinearModel};
pub use params::{PlantConfig, QtpParams};
pub use state::{ControlInput, Measurement, PlantState};
