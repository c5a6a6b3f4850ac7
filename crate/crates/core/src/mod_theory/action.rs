use serde::{Deserialize, Serialize};

use crate::models::{EffectiveInteraction, ModConfig};

/// Couplings of the single-mode action at a given discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCouplings {
    /// `U = 2 σ_a² a² P² / (N σ⁴)`.
    pub u: f64,
    pub gamma: f64,
    pub p: usize,
}

pub fn mode_couplings(a_mag: f64, cfg: &ModConfig) -> ModeCouplings {
    ModeCouplings { u: a_mag * a_mag * cfg.effective_interaction(), gamma: cfg.gamma, p: cfg.p }
}

/// `S_k(x, y) = P [(x + y)/2 − U x y + (γ/6)(x³ + y³)]` with `x = |w_k|²`, `y = |v_k|²`.
pub fn fourier_action(x: f64, y: f64, a_mag: f64, cfg: &ModConfig) -> f64 {
    let c = mode_couplings(a_mag, cfg);
    c.p as f64 * (0.5 * (x + y) - c.u * x * y + c.gamma / 6.0 * (x * x * x + y * y * y))
}

/// Nontrivial stationary points on the diagonal `x = y`.
///
/// Both solve `(γ/2) x² − U x + 1/2 = 0`; `w_minus2` is the saddle between
/// the trivial minimum and the `w_plus2` minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePair {
    pub w_plus2: f64,
    pub w_minus2: f64,
}

impl SaddlePair {
    /// `|(γ/2)x² − Ux + 1/2|` divided by the sum of the magnitudes of its terms.
    pub fn relative_residual(x: f64, u: f64, gamma: f64) -> f64 {
        let terms = [0.5 * gamma * x * x, -u * x, 0.5];
        terms.iter().sum::<f64>().abs() / terms.iter().map(|t| t.abs()).sum::<f64>()
    }
}

/// `w_±² = (U ± √(U² − γ))/γ`, or `None` when `U² < γ`.
pub fn saddle_pair(a_mag: f64, cfg: &ModConfig) -> Option<SaddlePair> {
    let c = mode_couplings(a_mag, cfg);
    let disc = c.u * c.u - c.gamma;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let w_plus2 = (c.u + root) / c.gamma;
    // product of the roots is 1/γ; avoids cancellation in U − √(U² − γ)
    let w_minus2 = 1.0 / (c.u + root);
    Some(SaddlePair { w_plus2, w_minus2 })
}

/// `S_k(w_+², w_+²)`, or `None` without a nontrivial saddle.
pub fn saddle_action(a_mag: f64, cfg: &ModConfig) -> Option<f64> {
    saddle_pair(a_mag, cfg).map(|s| fourier_action(s.w_plus2, s.w_plus2, a_mag, cfg))
}
