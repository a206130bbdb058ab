//! Motion near artificial equilibrium points of the circular restricted
//! three-body problem (CR3BP) with a non-Hamiltonian solar-radiation-pressure
//! force.
//!
//! The crate builds order-n approximate analytical solutions for periodic
//! orbits and invariant manifolds around sail-displaced equilibria and
//! validates them against direct numerical integration:
//!
//! * [`dynamics`] — exact CR3BP + SRP vector field in the rotating frame,
//! * [`equilibria`] — Newton solves and attitude-angle sweeps for artificial
//!   equilibrium points,
//! * [`series`] — arithmetic over truncated four-amplitude trigonometric
//!   series,
//! * [`expansions`] — Legendre-recurrence expansions of the right-hand side
//!   about an equilibrium,
//! * [`linearization`] — linear model, eigenstructure and closed-form linear
//!   solution,
//! * [`lindstedt`] — the order-n Lindstedt–Poincaré solver,
//! * [`trajectory`] — sampling solutions into state-space arcs,
//! * [`integrator`] — adaptive embedded Runge–Kutta 5(4) propagation,
//! * [`validation`] — position-error studies against integrated truth.
//!
//! All quantities are nondimensional (unit primary separation, unit rotation
//! rate); angles are radians. The numerical core is generic over the scalar
//! type through [`Real`]; `f64` aliases are exported at the crate root.

pub mod dynamics;
pub mod equilibria;
pub mod expansions;
pub mod integrator;
pub mod lindstedt;
pub mod linearization;
pub mod series;
pub mod trajectory;
pub mod validation;

mod error;
mod real;

pub use error::{Error, Result};
pub use real::Real;

/// Double-precision aliases for the main pipeline types.
pub type TrigSeries64 = series::TrigSeries<f64>;
pub type FrequencySeries64 = series::FrequencySeries<f64>;
