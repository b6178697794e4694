//! Triangulated parallelogram lattices and piecewise-affine deformations.

mod deformation;
mod domain;
pub mod format;

pub use deformation::{AdmissibilityReport, Constraint, Deformation};
pub use domain::{
    Ends, GradientLegs, LatticeDomain, Role, Shape, Triangle, TriangleKind, EAST, NONE, NORTH, SOUTH, WEST,
};
