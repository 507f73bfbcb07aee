//! Transmit beamformer design: criterion catalog, SVD structure and the
//! waterfilling power allocation solved through its Lagrange dual.

mod beamformer;
mod convexity;
mod criterion;
mod dual;
mod power;
mod waterfill;

pub use beamformer::{assemble_beamformer, assemble_with_rotation, rotation_matrix};
pub use convexity::{
    amse_second_derivative, convexity_probe, ConvexityReport, ConvexityViolation, THETAS,
};
pub use criterion::{objective, q_function, schur_class, Criterion, CriterionKind, SchurClass};
pub use dual::{amse_water_level, solve_dual, DualSolution, DualState, SolverConfig, TraceRecord};
pub use power::PowerAllocation;
pub use waterfill::{
    b_factor, effective_multiplier, gradient_entries, kkt_residual, normalized_stream_mse,
    power_objective, solve_inner, waterfill,
};
