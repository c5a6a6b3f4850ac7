//! Shared numerical kernel.
//!
//! Default tolerances used across the crate unless a solver overrides them:
//! quadrature relative tolerance `1e-8`, root residual `1e-10`, fixed-point
//! tolerance `1e-8` with damping `0.5` and at most `500` iterations.

mod fixed_point;
mod minima;
mod quad;
mod rng;
mod roots;

pub use fixed_point::{fixed_point, FixedPointOptions, FixedPointOutcome};
pub use minima::{golden_section, local_minima, Grid1D, LocalMinimum};
pub use quad::{integrate_weighted, integrate_weighted_many, QuadOptions, WeightedIntegral};
pub use rng::{derive_seed, stream_rng, RngState, StreamRng};
pub use roots::{find_roots, Root, RootOptions, RootSet};

pub const DEFAULT_QUAD_TOL: f64 = 1e-8;
pub const DEFAULT_ROOT_RESIDUAL: f64 = 1e-10;
pub const DEFAULT_FP_TOL: f64 = 1e-8;
pub const DEFAULT_DAMPING: f64 = 0.5;
pub const DEFAULT_MAX_ITER: usize = 500;

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

/// Central finite difference with step `h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Second central difference with step `h`.
pub fn second_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}
