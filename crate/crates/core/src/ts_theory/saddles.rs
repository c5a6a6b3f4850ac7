use serde::{Deserialize, Serialize};

use super::action::{action_ts, DiscrepancyTs};
use super::solver::TsSolverOptions;
use crate::models::TsConfig;
use crate::numerics::{central_diff, local_minima, second_diff, Grid1D};
use crate::phase::{PhaseLabel, PhaseReport};

/// A local minimum of the action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saddle {
    pub location: f64,
    pub value: f64,
    pub curvature: f64,
    pub interior: bool,
}

impl Saddle {
    pub fn is_trivial(&self) -> bool {
        self.location == 0.0
    }
}

/// Minima of `S` on `[-q_max, q_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSet {
    pub minima: Vec<Saddle>,
    /// `min S(q*) − S(0)` over interior minima with `q* ≠ 0`.
    pub global_gap: Option<f64>,
    pub q_max: f64,
}

impl SaddleSet {
    pub fn nontrivial(&self) -> impl Iterator<Item = &Saddle> {
        self.minima.iter().filter(|m| m.interior && !m.is_trivial())
    }

    pub fn trivial(&self) -> Option<&Saddle> {
        self.minima.iter().find(|m| m.is_trivial())
    }

    /// Laplace mass `Z₊ / (Z₀ + Z₊)` of the nontrivial minima.
    pub fn droplet_weight(&self) -> f64 {
        let masses = |m: &Saddle| -> (f64, f64) { (-m.value, -0.5 * m.curvature.max(f64::MIN_POSITIVE).ln()) };
        let mut logs: Vec<(bool, f64)> = Vec::new();
        if let Some(t) = self.trivial() {
            let (a, b) = masses(t);
            logs.push((false, a + b));
        }
        for m in self.nontrivial() {
            let (a, b) = masses(m);
            logs.push((true, a + b));
        }
        if !logs.iter().any(|l| l.0) {
            return 0.0;
        }
        let top = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        let (mut plus, mut total) = (0.0, 0.0);
        for (nontrivial, l) in logs {
            let w = (l - top).exp();
            total += w;
            if nontrivial {
                plus += w;
            }
        }
        plus / total
    }
}

/// Locate and refine every minimum of `S` for the given discrepancy.
///
/// `q_max = 3 max(1, σ_w)`, doubled while a minimum sits on the boundary.
pub fn find_saddles_ts(disc: &DiscrepancyTs, cfg: &TsConfig, opts: &TsSolverOptions) -> SaddleSet {
    let f = |q: f64| action_ts(q, disc, cfg);
    let mut q_max = 3.0 * cfg.sigma_w2.sqrt().max(1.0);
    let points = opts.saddle_points.max(5) | 1;
    loop {
        let grid = Grid1D::tabulate(f, -q_max, q_max, points).expect("finite action on a valid grid");
        let raw = local_minima(&grid, Some(&f), 1e-12 * q_max);
        let on_boundary = raw.iter().any(|m| !m.interior);
        if on_boundary && q_max < 100.0 {
            q_max *= 2.0;
            continue;
        }
        let mid = points / 2;
        let zero_is_min = grid.values()[mid] < grid.values()[mid - 1] && grid.values()[mid] < grid.values()[mid + 1];
        let mut minima: Vec<Saddle> = raw
            .into_iter()
            .map(|m| Saddle { location: m.location, value: m.value, curvature: m.curvature, interior: m.interior })
            .collect();
        if zero_is_min {
            // S is even with S(0) = 0: pin the trivial minimum exactly.
            let h = 1e-4;
            for m in minima.iter_mut() {
                if m.interior && m.location.abs() < 1e-6 {
                    *m = Saddle { location: 0.0, value: 0.0, curvature: second_diff(f, 0.0, h), interior: true };
                }
            }
        }
        let global_gap =
            minima.iter().filter(|m| m.interior && !m.is_trivial()).map(|m| m.value - 0.0).reduce(f64::min);
        return SaddleSet { minima, global_gap, q_max };
    }
}

/// `|S′(q*)| < 1e-8 (1 + |S″(q*)|)` by central differences with step `1e-5`.
pub fn is_stationary(disc: &DiscrepancyTs, cfg: &TsConfig, q: f64) -> bool {
    let f = |x: f64| action_ts(x, disc, cfg);
    let h = 1e-5;
    central_diff(f, q, h).abs() < 1e-8 * (1.0 + second_diff(f, q, h).abs())
}

/// Phase label from the global gap plus the droplet weight.
pub fn classify_phase_ts(saddles: &SaddleSet, window: f64) -> PhaseReport {
    PhaseReport {
        phase: PhaseLabel::from_gap(saddles.global_gap, window),
        gap: saddles.global_gap,
        droplet_weight: saddles.droplet_weight(),
        components: Vec::new(),
    }
}
