//! Mean-field theory of modular addition.
//!
//! In Fourier variables every mode `k ≠ 0` carries its own action in
//! `x = |w_k|²`, `y = |v_k|²`; the discrepancy `a` along the target enters
//! through the quartic coupling `U = u a²`. The saddles of that action fix the
//! eigenvalue `λ(a)` and, through `a = σ²/(λ + σ²)`, the self-consistent `a`.

mod action;
mod kernel;
mod solver;

pub use action::{fourier_action, mode_couplings, saddle_action, saddle_pair, ModeCouplings, SaddlePair};
pub use kernel::{
    fourier_basis, gp_target_eigenvalue, nngp_kernel, target_vectors, verify_symmetries, CheckResult, KernelMatrix,
    SymmetryReport,
};
pub use solver::{
    classify_at, classify_phase_mod, droplet_weight, lambda_of_a, phase_boundaries, refine_boundary, saddle_onset,
    scan_sigma_mod, solve_a, DiscrepancyMod, ModPhasePoint, ModScanRow, ModSolverOptions,
};
