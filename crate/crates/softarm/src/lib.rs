//! Control stack for an antagonistically actuated spherical soft robotic arm.
//!
//! The arm has three bellow actuators arranged at 120° around a soft joint.
//! Absolute actuator pressures map bijectively to a Delta Representation
//! (p̄, Δp_α, Δp_β) that separates joint stiffness from the two angular
//! excitations. On top of that sit:
//!
//! - [`plant`] — a synthetic LPV ground-truth simulator (per-axis pendulum
//!   with first-order torque dynamics and an inner pressure-loop lag),
//! - [`sysid`] — a frequency-domain identification pipeline (sine sweeps,
//!   sinusoidal correlation, complex curve fitting, parameter polynomials),
//! - [`control`] — a gain-scheduled feedback controller with gravity
//!   feedforward in a cascaded architecture,
//! - [`ilc`] — norm-optimal iterative learning control in serial
//!   architecture with warm-start concatenation,
//! - [`trajectory`] — reference generation including the three-phase
//!   pick-and-place plan,
//! - [`sim`] — the closed-loop rollout engine tying everything together.

pub mod allocation;
pub mod config;
pub mod control;
pub mod error;
pub mod ilc;
pub mod plant;
pub mod poly;
pub mod sim;
pub mod sysid;
pub mod trajectory;

pub use error::{Error, Result};
