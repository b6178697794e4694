//! Wells, lattice energy densities and the discrete Hamiltonian.

pub mod density;
mod hamiltonian;
mod wells;

pub use density::{Cutoff, Density, PluginDensity, Stencil};
pub use hamiltonian::{energy, energy_gradient, energy_report, node_stencil, rescaled_energy, EnergyGradient, EnergyReport};
pub use wells::{Sign, WellLabel, WellSystem};
