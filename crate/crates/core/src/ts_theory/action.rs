use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::models::{EffectiveInteraction, TsConfig};
use crate::numerics::Grid1D;
use crate::Result;

/// Coefficients of the discrepancy `σ² t̄ = b H₁ + c H₃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyTs {
    pub b: f64,
    pub c: f64,
}

impl DiscrepancyTs {
    /// Zero kernel: nothing learned, the discrepancy is the target itself.
    pub fn gp_start(eps: f64) -> Self {
        DiscrepancyTs { b: 1.0, c: eps }
    }

    /// Small discrepancy, as if the teacher were mostly learned.
    pub fn learned_start(eps: f64) -> Self {
        DiscrepancyTs { b: 0.05, c: 0.05 * eps }
    }

    pub fn max_diff(&self, other: &DiscrepancyTs) -> f64 {
        (self.b - other.b).abs().max((self.c - other.c).abs())
    }
}

/// `D(q) = 1 + 2(σ_w² + q²)`.
pub(crate) fn denom(q: f64, sigma_w2: f64) -> f64 {
    1.0 + 2.0 * (sigma_w2 + q * q)
}

/// Single-neuron action in the teacher overlap `q`.
///
/// `S(q) = d [q²/(2σ_w²) − (2u/π) (q²/D) (b − 2c q²/D)²]`.
pub fn action_ts(q: f64, disc: &DiscrepancyTs, cfg: &TsConfig) -> f64 {
    let u = cfg.effective_interaction();
    action_with_u(q, disc, cfg, u)
}

pub(crate) fn action_with_u(q: f64, disc: &DiscrepancyTs, cfg: &TsConfig, u: f64) -> f64 {
    let q2 = q * q;
    let dd = denom(q, cfg.sigma_w2);
    let r = disc.b - 2.0 * disc.c * q2 / dd;
    cfg.d as f64 * (q2 / (2.0 * cfg.sigma_w2) - 2.0 * u / PI * q2 / dd * r * r)
}

/// Tabulated action together with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCurve {
    pub q: Vec<f64>,
    pub action: Vec<f64>,
    pub config: TsConfig,
    pub disc: DiscrepancyTs,
}

impl ActionCurve {
    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.q.clone(), self.action.clone())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,S\n");
        for (q, s) in self.q.iter().zip(&self.action) {
            out.push_str(&format!("{q:.16e},{s:.16e}\n"));
        }
        out
    }
}

/// `S` on `points` evenly spaced values in `[-q_max, q_max]`.
pub fn action_curve(disc: &DiscrepancyTs, cfg: &TsConfig, q_max: f64, points: usize) -> ActionCurve {
    let q = crate::numerics::linspace(-q_max, q_max, points);
    let action = q.iter().map(|&x| action_ts(x, disc, cfg)).collect();
    ActionCurve { q, action, config: *cfg, disc: *disc }
}
