//! Initial states and the constrained minimizer.

mod init;
mod minimize;

pub use init::{bump_field, initialize, initialize_with_boundary, InitMode, Laminate};
pub use minimize::{
    minimize, minimize_with_continuation, ContinuationResult, Method, MinimizeOptions, MinimizeResult, SmoothingStage,
    Termination, SMOOTHING_SCHEDULE,
};
