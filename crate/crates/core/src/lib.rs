//! Mean-field laboratory for grokking viewed as a first-order phase transition.
//!
//! Two two-layer networks are covered: an erf student learning a cubic
//! single-index teacher, and a square-activation network learning modular
//! addition. For each, the crate solves the self-consistent discrepancy
//! equations of the adaptive-kernel mean-field theory, tabulates the
//! single-neuron action, locates its saddles and labels the learning phase
//! (GFL, GMFL-I, GMFL-II). An Euler–Maruyama Langevin sampler of the actual
//! networks provides the empirical counterparts.
//!
//! Module map:
//!
//! - [`models`]: configurations, datasets, forward passes, scaling laws.
//! - [`numerics`]: quadrature, root finding, fixed points, minima, RNG streams.
//! - [`ts_theory`]: teacher-student solver for the `(b, c)` discrepancy.
//! - [`mod_theory`]: modular-addition solver for `a`, plus the small-`P`
//!   kernel symmetry oracle.
//! - [`langevin`]: ensembles of equilibrium samples and their estimators.

// Negated comparisons reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod langevin;
pub mod mod_theory;
pub mod models;
pub mod numerics;
pub mod phase;
pub mod ts_theory;

pub use error::{Error, Result};
pub use models::{
    EffectiveInteraction, ModConfig, ModDataset, ModNetwork, ScalingKnobs, TsConfig, TsDataset, TsNetwork,
};
pub use phase::{PhaseLabel, PhaseReport};
