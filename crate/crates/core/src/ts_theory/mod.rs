//! Mean-field theory of the erf teacher-student model.
//!
//! The discrepancy `σ² t̄ = b H₁ + c H₃` is solved self-consistently with the
//! kernel `Q̃` averaged over the single-neuron action `S(q)`, where `q = w·w*`.
//! The minima of `S` decide the learning phase.

mod action;
mod integrals;
mod saddles;
mod scan;
mod solver;

pub use action::{action_curve, action_ts, ActionCurve, DiscrepancyTs};
pub use integrals::{integral_i0, integral_i1};
pub use saddles::{classify_phase_ts, find_saddles_ts, is_stationary, Saddle, SaddleSet};
pub use scan::{
    critical_u, hysteresis_points, predicted_components, scan_sigma_ts, CriticalPoint, ScanDirection, TsScanRow,
};
pub use solver::{gpr_update, qtilde_matrix, solve_bc, solve_bc_all, BcSolution, QuadMode, TsSolverOptions};
