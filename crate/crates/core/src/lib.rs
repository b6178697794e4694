//! Discrete two-well energies on triangulated lattices.
//!
//! The crate builds parallelogram lattices, evaluates the two-well lattice
//! Hamiltonian and its gradient, minimizes it under boundary data, extracts
//! spin fields, and runs the interface-energy and rigidity studies.

pub mod energy;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod spin;
pub mod analysis;
pub mod optimize;
pub mod layers;
pub mod gridperturb;
pub mod fixtures;
pub mod cli;

pub use error::{Error, Result};
