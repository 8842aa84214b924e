//! Finite-mode nonrelativistic QED at desk scale.
//!
//! Mode lattices and polarization frames ([`lattice`]), field coordinates and
//! vector potentials ([`field`]), lattice Coulomb sums ([`coulomb`]), broken-line
//! actions ([`action`]), ladder operators and photon states ([`fock`]), and the
//! time-sliced propagator with its diagnostics ([`propagator`]). The [`cli`]
//! module drives the studies from a config file.

pub mod action;
pub mod cli;
pub mod config;
pub mod coulomb;
pub mod error;
pub mod field;
pub mod fock;
pub mod hermite;
pub mod lattice;
pub mod propagator;
pub mod quadrature;

pub use config::SimulationConfig;
pub use error::{Error, Result};

pub use num_complex::Complex64;
