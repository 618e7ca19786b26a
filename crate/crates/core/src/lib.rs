//! Lattice simulation of a classical Hamiltonian field theory whose
//! large-`mc²/h` limit reproduces Schrödinger dynamics, together with the
//! Noether charges of the theory and the quantum expectation values they
//! correspond to.
//!
//! * [`lattice`]: periodic grids, spectral derivatives, quadrature, I/O.
//! * [`dynamics`]: field state, Hamiltonian, field equations, time stepping.
//! * [`charges`]: energy, momentum, angular momentum and phase charges.
//! * [`quantum`]: wavefunction map, expectation values, Schrödinger solver,
//!   Ehrenfest check.
//! * [`scenario`]: JSON-configured experiment runner behind the CLI.

pub mod charges;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod quantum;
pub mod scenario;
mod series;

pub use error::{Error, Result};
