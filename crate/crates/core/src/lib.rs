//! Multilayer dislocation dynamics in a half-plane with a dynamic boundary
//! condition.
//!
//! The crate provides the misfit potential, the stationary layer and its
//! correctors, the repulsive particle system that drives the slow motion,
//! a semi-implicit solver for the coupled bulk/interface evolution, the
//! reduced one-dimensional fractional Allen–Cahn solver, the barrier
//! (super/subsolution) constructions, and an experiment harness that ties
//! them together.

pub mod barriers;
pub mod correctors;
pub mod criteria;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod layer;
mod linalg;
pub mod nonlocal;
pub mod ode;
pub mod potential;
pub mod quadrature;
pub mod reduced;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
pub use report::{Check, Report};
