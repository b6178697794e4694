//! Discrete diagnostics: gradients of lattice fields, second differences, the coarea
//! comparison, two-point rigidity sampling and interface extraction.

mod coarea;
mod field;
mod interface;
mod rigidity;
mod second_diff;

pub use coarea::{coarea_check, CoareaRecord};
pub use field::{DiscreteGradient, ScalarLatticeField};
pub use interface::{bulk_mean_distance, interface_extract, InterfaceSegment, InterfaceStatus, InterfaceSummary, Phase};
pub use rigidity::{needle_state, rigidity_sample, Needle, RigidityParams, RigidityRecord};
pub use second_diff::{second_diff_check, second_differences, second_gradient_budget, SecondDiffRecord, SecondDifferences};
